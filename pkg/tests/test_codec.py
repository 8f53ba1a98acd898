import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pstmon import protocol_path
from pstmon.codec import CodecError, decode, encode, load_codec
from pstmon.monitor import TypedMessage, Unrecognized
from pstmon.pst import parse_pst, parse_pst_file

GAME_PST = parse_pst_file(protocol_path("game.pst"))
SMTP_PST = parse_pst_file(protocol_path("smtp.pst"))


def game_codec():
    return load_codec(protocol_path("game.codec.json"), GAME_PST, perspective="client")


def smtp_codec():
    return load_codec(protocol_path("smtp.codec.json"), SMTP_PST, perspective="server")


def test_decode_guess():
    msg = decode(game_codec(), "client", "GUESS 23")
    assert msg == TypedMessage("client", "Guess", 23)


def test_decode_correct():
    assert decode(game_codec(), "server", "CORRECT") == TypedMessage("server", "Correct", None)


def test_decode_unrecognized():
    spec = game_codec()
    assert decode(spec, "client", "FROBNICATE") == Unrecognized("client", "FROBNICATE")
    # a client line is not matched by server rules and vice versa
    assert isinstance(decode(spec, "server", "GUESS 23"), Unrecognized)


def test_decode_bad_payload_is_unrecognized():
    assert isinstance(decode(game_codec(), "client", "GUESS abc"), Unrecognized)


def test_encode_examples():
    spec = game_codec()
    assert encode(spec, TypedMessage("server", "Correct", None)) == "CORRECT"
    assert encode(spec, TypedMessage("client", "Guess", 23)) == "GUESS 23"
    assert encode(spec, TypedMessage("server", "Hint", "try 50")) == "HINT try 50"


def test_encode_missing_rule():
    with pytest.raises(CodecError):
        encode(game_codec(), TypedMessage("client", "Bogus", None))


def test_game_codec_loads_with_six_rules():
    assert len(game_codec().rules) == 6
    assert game_codec().framing == "LF"


def test_smtp_codec_covers_label_set():
    spec = smtp_codec()
    labels = {r.label for r in spec.rules}
    assert labels == {
        "M220", "Helo", "M250", "MailFrom", "RcptTo",
        "Data", "M354", "Content", "M221", "Quit",
    }
    assert spec.framing == "CRLF"
    assert spec.newline == b"\r\n"


def test_smtp_content_round_trips_escaped_body():
    spec = smtp_codec()
    wire = encode(spec, TypedMessage("client", "Content", "hello\\nworld"))
    assert wire == "hello\\nworld."
    assert decode(spec, "client", wire) == TypedMessage("client", "Content", "hello\\nworld")


def test_missing_rule_reported_with_label(tmp_path):
    doc = json.loads(open(protocol_path("game.codec.json")).read())
    doc["rules"] = [r for r in doc["rules"] if r["label"] != "Hint"]
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(CodecError, match="Hint"):
        load_codec(str(path), GAME_PST, perspective="client")


def test_bad_regex_reported(tmp_path):
    doc = {
        "framing": "LF",
        "rules": [{"label": "A", "direction": "client", "pattern": "(", "payload": None,
                   "template": "A"}],
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(CodecError, match="pattern"):
        load_codec(str(path))


def test_capture_arity_mismatch(tmp_path):
    doc = json.loads(open(protocol_path("game.codec.json")).read())
    for rule in doc["rules"]:
        if rule["label"] == "Help":
            rule["pattern"] = "HELP( extra)?"  # one group, but no payload
    path = tmp_path / "arity.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(CodecError, match="Help"):
        load_codec(str(path), GAME_PST, perspective="client")


def test_duplicate_rule_rejected(tmp_path):
    doc = json.loads(open(protocol_path("game.codec.json")).read())
    doc["rules"].append(doc["rules"][-1])
    path = tmp_path / "dup.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(CodecError, match="duplicate"):
        load_codec(str(path), GAME_PST, perspective="client")


def test_wrong_framing_rejected(tmp_path):
    path = tmp_path / "framing.json"
    path.write_text(json.dumps({"framing": "NUL", "rules": []}))
    with pytest.raises(CodecError, match="framing"):
        load_codec(str(path))


def test_overlap_warning_logged(tmp_path, caplog):
    doc = {
        "framing": "LF",
        "rules": [
            {"label": "A", "direction": "client", "pattern": "PING", "payload": None,
             "template": "PING"},
            {"label": "B", "direction": "client", "pattern": "PI.*", "payload": None,
             "template": "PINGS"},
        ],
    }
    path = tmp_path / "overlap.json"
    path.write_text(json.dumps(doc))
    with caplog.at_level("WARNING", logger="pstmon.codec"):
        load_codec(str(path))
    assert any("overlap" in r.message for r in caplog.records)


@given(st.integers(min_value=-(2**63), max_value=2**63 - 1))
@settings(max_examples=200, deadline=None)
def test_guess_round_trip_ints(n):
    spec = game_codec()
    msg = TypedMessage("client", "Guess", n)
    assert decode(spec, "client", encode(spec, msg)) == msg


@given(st.text(alphabet=st.characters(blacklist_characters="\r\n"), max_size=60))
@settings(max_examples=200, deadline=None)
def test_hint_round_trip_strings(s):
    spec = game_codec()
    msg = TypedMessage("server", "Hint", s)
    assert decode(spec, "server", encode(spec, msg)) == msg


def test_bool_payload_round_trip(tmp_path):
    doc = {
        "framing": "LF",
        "rules": [{"label": "Flag", "direction": "client", "pattern": "FLAG (.+)",
                   "payload": "Bool", "template": "FLAG {0}"}],
    }
    path = tmp_path / "bool.json"
    path.write_text(json.dumps(doc))
    spec = load_codec(str(path))
    for value in (True, False):
        msg = TypedMessage("client", "Flag", value)
        assert decode(spec, "client", encode(spec, msg)) == msg
    assert decode(spec, "client", "FLAG TRUE") == TypedMessage("client", "Flag", True)
    assert isinstance(decode(spec, "client", "FLAG maybe"), Unrecognized)


def test_decode_is_stateless():
    spec = game_codec()
    line = "GUESS 7"
    first = decode(spec, "client", line)
    for _ in range(3):
        assert decode(spec, "client", line) == first
