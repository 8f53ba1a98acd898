"""Compile a validated session type into a finite monitor automaton.

Every syntactic choice occurrence (including bare singleton prefixes)
becomes one choice state; recursion becomes a back-edge to an existing
state, and all ``end`` leaves share a single terminal state. Choice
points are identified by the dotted path of branch labels walked from
the root, which is stable across runs for the same source text.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

from .pst import (
    Choice,
    End,
    InternalChoice,
    Rec,
    SessionType,
    Sort,
    Var,
    prob_literal,
    validate,
)

SEND = "!"
RECEIVE = "?"


@dataclass(frozen=True)
class BranchEdge:
    label: str
    payload_sort: Optional[Sort]
    prob: Fraction
    target: int


@dataclass(frozen=True)
class ChoiceState:
    id: int
    polarity: str  # SEND or RECEIVE
    choice_point_id: str
    edges: tuple[BranchEdge, ...]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(e.label for e in self.edges)

    @property
    def singleton(self) -> bool:
        return len(self.edges) == 1

    def edge(self, label: str) -> Optional[BranchEdge]:
        for e in self.edges:
            if e.label == label:
                return e
        return None


@dataclass(frozen=True)
class EndState:
    id: int


State = Union[ChoiceState, EndState]


@dataclass(frozen=True)
class MonitorAutomaton:
    states: tuple[State, ...]
    initial: int

    def state(self, state_id: int) -> State:
        return self.states[state_id]

    def choice_states(self) -> list[ChoiceState]:
        return [s for s in self.states if isinstance(s, ChoiceState)]

    def labels(self) -> set[str]:
        return {e.label for s in self.choice_states() for e in s.edges}


def compile_type(t: SessionType) -> MonitorAutomaton:
    """Build the automaton for a type with no well-formedness errors."""
    errors = validate(t)
    if errors:
        raise ValueError("cannot compile an ill-formed type: " + "; ".join(map(str, errors)))

    states: list[Optional[State]] = []
    end_id: Optional[int] = None

    def intern_end() -> int:
        nonlocal end_id
        if end_id is None:
            end_id = len(states)
            states.append(EndState(end_id))
        return end_id

    def resolve(node: SessionType, env: dict[str, int], path: str) -> int:
        pending: list[str] = []
        while isinstance(node, Rec):
            pending.append(node.var)
            node = node.body
        if isinstance(node, Var):
            return env[node.name]
        if isinstance(node, End):
            return intern_end()
        sid = len(states)
        states.append(None)  # reserved so back-edges can point here
        inner = {**env, **{v: sid for v in pending}}
        edges = tuple(
            BranchEdge(
                b.label,
                b.payload.sort if b.payload else None,
                b.prob,
                resolve(b.cont, inner, f"{path}.{b.label}"),
            )
            for b in node.branches
        )
        polarity = SEND if isinstance(node, InternalChoice) else RECEIVE
        states[sid] = ChoiceState(sid, polarity, path, edges)
        return sid

    initial = resolve(t, {}, "root")
    return MonitorAutomaton(tuple(states), initial)  # type: ignore[arg-type]


# --------------------------------------------------------------------------
# JSON dump/load (the `generate` artifact)
# --------------------------------------------------------------------------


def _prob_str(p: Fraction) -> str:
    try:
        return prob_literal(p)
    except ValueError:
        return f"{p.numerator}/{p.denominator}"


def _prob_parse(s: str) -> Fraction:
    return Fraction(s)


def to_json(a: MonitorAutomaton) -> dict:
    states = []
    for s in a.states:
        if isinstance(s, EndState):
            states.append({"id": s.id, "kind": "end"})
        else:
            states.append(
                {
                    "id": s.id,
                    "kind": "choice",
                    "polarity": s.polarity,
                    "choice_point_id": s.choice_point_id,
                    "branches": [
                        {
                            "label": e.label,
                            "payload": e.payload_sort.value if e.payload_sort else None,
                            "prob": _prob_str(e.prob),
                            "target": e.target,
                        }
                        for e in s.edges
                    ],
                }
            )
    return {"initial": a.initial, "states": states}


def from_json(doc: dict) -> MonitorAutomaton:
    states: list[State] = []
    for entry in doc["states"]:
        if entry["kind"] == "end":
            states.append(EndState(entry["id"]))
        else:
            edges = tuple(
                BranchEdge(
                    b["label"],
                    Sort(b["payload"]) if b["payload"] else None,
                    _prob_parse(b["prob"]),
                    b["target"],
                )
                for b in entry["branches"]
            )
            states.append(
                ChoiceState(entry["id"], entry["polarity"], entry["choice_point_id"], edges)
            )
    if [s.id for s in states] != list(range(len(states))):
        raise ValueError("automaton state ids must be dense and ordered")
    return MonitorAutomaton(tuple(states), doc["initial"])


def save_json(a: MonitorAutomaton, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(to_json(a), f, indent=2)
        f.write("\n")


def load_json(path: str) -> MonitorAutomaton:
    with open(path, "r", encoding="utf-8") as f:
        return from_json(json.load(f))
