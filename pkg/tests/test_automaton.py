from fractions import Fraction

import pytest

from pstmon import protocol_path
from pstmon.automaton import (
    ChoiceState,
    EndState,
    compile_type,
    from_json,
    to_json,
)
from pstmon.pst import parse_pst, parse_pst_file


def game():
    return parse_pst_file(protocol_path("game.pst"))


def smtp():
    return parse_pst_file(protocol_path("smtp.pst"))


def test_game_automaton_shape():
    a = compile_type(game())
    choices = a.choice_states()
    assert len(choices) == 3
    assert sum(isinstance(s, EndState) for s in a.states) == 1
    by_id = {s.choice_point_id: s for s in choices}
    assert set(by_id) == {"root", "root.Guess", "root.Help"}
    root = by_id["root"]
    assert a.initial == root.id
    assert root.polarity == "!"
    assert root.labels == ("Guess", "Help", "Quit")
    inner = by_id["root.Guess"]
    assert inner.polarity == "?"
    # recursion compiles to back-edges, never by copying
    assert inner.edge("Correct").target == root.id
    assert inner.edge("Incorrect").target == root.id
    hint = by_id["root.Help"]
    assert hint.singleton
    assert hint.edge("Hint").target == root.id
    end_id = next(s.id for s in a.states if isinstance(s, EndState))
    assert root.edge("Quit").target == end_id


def test_end_compiles_to_lone_end_state():
    a = compile_type(parse_pst("end"))
    assert len(a.states) == 1
    assert isinstance(a.state(a.initial), EndState)


def test_smtp_automaton_shape():
    a = compile_type(smtp())
    receives = [s for s in a.choice_states() if s.polarity == "?"]
    assert len(receives) == 4  # greeting choice, both loops, the body receive
    by_id = {s.choice_point_id: s for s in a.choice_states()}
    x_loop = by_id["root.M220.Helo.M250"]
    assert set(x_loop.labels) == {"MailFrom", "Quit"}
    y_loop = by_id["root.M220.Helo.M250.MailFrom.M250"]
    assert set(y_loop.labels) == {"RcptTo", "Data", "Quit"}
    # Y loops back via the reply to RcptTo, X via the reply after the body
    rcpt_reply = a.state(y_loop.edge("RcptTo").target)
    assert isinstance(rcpt_reply, ChoiceState) and rcpt_reply.singleton
    assert rcpt_reply.edges[0].target == y_loop.id
    data_reply = a.state(y_loop.edge("Data").target)
    content = a.state(data_reply.edges[0].target)
    assert content.singleton and content.labels == ("Content",)
    content_reply = a.state(content.edges[0].target)
    assert content_reply.edges[0].target == x_loop.id
    # a single shared end state despite three Quit paths
    assert sum(isinstance(s, EndState) for s in a.states) == 1


def test_compile_rejects_ill_formed():
    with pytest.raises(ValueError):
        compile_type(parse_pst("rec X.X"))


def test_probabilities_preserved_exactly():
    a = compile_type(game())
    root = next(s for s in a.choice_states() if s.choice_point_id == "root")
    assert root.edge("Guess").prob == Fraction(3, 4)
    assert root.edge("Quit").prob == Fraction(1, 20)


def test_json_round_trip():
    for t in (game(), smtp(), parse_pst("end")):
        a = compile_type(t)
        assert from_json(to_json(a)) == a


def test_json_probabilities_are_exact_decimals():
    doc = to_json(compile_type(game()))
    root = next(s for s in doc["states"] if s.get("choice_point_id") == "root")
    assert [b["prob"] for b in root["branches"]] == ["0.75", "0.2", "0.05"]


def test_compile_is_deterministic():
    assert compile_type(game()) == compile_type(game())
    assert to_json(compile_type(smtp())) == to_json(compile_type(smtp()))
