"""Drive a monitor automaton over a stream of typed messages.

Each session owns one automaton walk plus per-choice-point statistics.
Stepping a message yields log events: ``ok`` for a conforming message,
``warning_raised``/``warning_retracted`` when the observed frequency of
the branch just taken leaves or re-enters its confidence interval,
``violation`` for a hard protocol breach (terminal) and ``session_end``
on reaching the terminal state. Warning events always concern the branch
the message took, so raise/retract strictly alternate per branch;
deviation flags of sibling branches are still tracked in the statistics
and reported in the session summary.
"""

from __future__ import annotations

import csv
import enum
import json
import threading
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from .automaton import ChoiceState, EndState, MonitorAutomaton
from .stats import ChoiceStats, CiMethod

CLIENT = "client"
SERVER = "server"


def opposite(direction: str) -> str:
    return SERVER if direction == CLIENT else CLIENT


@dataclass(frozen=True)
class TypedMessage:
    direction: str  # CLIENT or SERVER: the side that sent it
    label: str
    payload: Union[int, str, bool, None] = None


@dataclass(frozen=True)
class Unrecognized:
    """A wire line no codec rule matched; kept verbatim for reporting."""

    direction: str
    raw: str


class Verdict(str, enum.Enum):
    OK = "ok"
    WARNING_RAISED = "warning_raised"
    WARNING_RETRACTED = "warning_retracted"
    VIOLATION = "violation"
    SESSION_END = "session_end"

    def __str__(self) -> str:  # CSV-friendly
        return self.value


@dataclass(frozen=True)
class MonitorEvent:
    session_id: str
    seq: int
    direction: str
    choice_point_id: str
    label: str
    n: int
    p_hat: float
    ci_lo: float
    ci_hi: float
    verdict: Verdict
    timestamp_ms: int
    detail: str = ""  # violation reason; not part of the log schema


@dataclass(frozen=True)
class MonitorConfig:
    perspective: str = SERVER  # which network side plays the type's endpoint
    ci: CiMethod = CiMethod()
    min_samples: int = 1
    aggregate: bool = False

    def __post_init__(self):
        if self.perspective not in (CLIENT, SERVER):
            raise ValueError(f"perspective must be 'client' or 'server', got {self.perspective!r}")
        if self.min_samples < 1:
            raise ValueError("min_samples must be >= 1")


# --------------------------------------------------------------------------
# Event sinks
# --------------------------------------------------------------------------

CSV_HEADER = [
    "session_id",
    "seq",
    "direction",
    "choice_point_id",
    "label",
    "n",
    "p_hat",
    "ci_lo",
    "ci_hi",
    "verdict",
    "timestamp_ms",
]


class NullSink:
    def emit(self, event: MonitorEvent) -> None:
        pass

    def close(self) -> None:
        pass


class ListSink:
    def __init__(self):
        self.events: list[MonitorEvent] = []
        self._lock = threading.Lock()

    def emit(self, event: MonitorEvent) -> None:
        with self._lock:
            self.events.append(event)

    def close(self) -> None:
        pass


class CsvEventSink:
    """Monitor log: one CSV row per event, flushed per row for live tailing."""

    def __init__(self, path: str):
        self._f = open(path, "w", encoding="utf-8", newline="")
        self._writer = csv.writer(self._f, lineterminator="\n")
        self._lock = threading.Lock()
        self._writer.writerow(CSV_HEADER)
        self._f.flush()

    def emit(self, event: MonitorEvent) -> None:
        row = [
            event.session_id,
            event.seq,
            event.direction,
            event.choice_point_id,
            event.label,
            event.n,
            f"{event.p_hat:.6f}",
            f"{event.ci_lo:.6f}",
            f"{event.ci_hi:.6f}",
            event.verdict.value,
            event.timestamp_ms,
        ]
        with self._lock:
            self._writer.writerow(row)
            self._f.flush()

    def close(self) -> None:
        with self._lock:
            self._f.close()


class JsonlEventSink:
    """Same fields as the CSV log, one JSON object per line."""

    def __init__(self, path: str):
        self._f = open(path, "w", encoding="utf-8")
        self._lock = threading.Lock()

    def emit(self, event: MonitorEvent) -> None:
        doc = {
            "session_id": event.session_id,
            "seq": event.seq,
            "direction": event.direction,
            "choice_point_id": event.choice_point_id,
            "label": event.label,
            "n": event.n,
            "p_hat": round(event.p_hat, 6),
            "ci_lo": round(event.ci_lo, 6),
            "ci_hi": round(event.ci_hi, 6),
            "verdict": event.verdict.value,
            "timestamp_ms": event.timestamp_ms,
        }
        with self._lock:
            self._f.write(json.dumps(doc) + "\n")
            self._f.flush()

    def close(self) -> None:
        with self._lock:
            self._f.close()


class TeeSink:
    def __init__(self, *sinks):
        self._sinks = sinks

    def emit(self, event: MonitorEvent) -> None:
        for s in self._sinks:
            s.emit(event)

    def close(self) -> None:
        for s in self._sinks:
            s.close()


# --------------------------------------------------------------------------
# Cross-session aggregation (informational only)
# --------------------------------------------------------------------------


class AggregateStats:
    """Cross-session observation counts; never used for verdicts."""

    def __init__(self):
        self._counts: dict[str, dict[str, int]] = {}
        self._lock = threading.Lock()
        self._rows_emitted = 0

    def observe(self, choice_point_id: str, label: str) -> None:
        with self._lock:
            per_cp = self._counts.setdefault(choice_point_id, {})
            per_cp[label] = per_cp.get(label, 0) + 1

    def emit_rows(self, automaton: MonitorAutomaton, config: MonitorConfig, sink) -> None:
        """Log the running totals as rows under the pseudo-session "aggregate"."""
        from .stats import ci_bounds

        now = _now_ms()
        with self._lock:
            for state in automaton.choice_states():
                counts = self._counts.get(state.choice_point_id)
                if not counts:
                    continue
                n = sum(counts.values())
                direction = (
                    config.perspective if state.polarity == "!" else opposite(config.perspective)
                )
                for edge in state.edges:
                    c = counts.get(edge.label, 0)
                    lo, hi = ci_bounds(float(edge.prob), n, config.ci)
                    self._rows_emitted += 1
                    sink.emit(
                        MonitorEvent(
                            session_id="aggregate",
                            seq=self._rows_emitted,
                            direction=direction,
                            choice_point_id=state.choice_point_id,
                            label=edge.label,
                            n=n,
                            p_hat=c / n,
                            ci_lo=lo,
                            ci_hi=hi,
                            verdict=Verdict.OK,
                            timestamp_ms=now,
                        )
                    )


# --------------------------------------------------------------------------
# Session
# --------------------------------------------------------------------------


@dataclass
class ChoicePointSummary:
    choice_point_id: str
    n: int
    counts: dict[str, int]
    estimates: dict[str, float]
    warned: dict[str, bool]


@dataclass
class SessionSummary:
    session_id: str
    verdict: str  # "completed" | "violation" | "aborted"
    events: int
    choice_points: dict[str, ChoicePointSummary] = field(default_factory=dict)


def _now_ms() -> int:
    return time.time_ns() // 1_000_000


class MonitorSession:
    """One session's monitor walk. Not thread-safe; callers driving the two
    message directions concurrently must serialise through :attr:`lock`."""

    def __init__(
        self,
        automaton: MonitorAutomaton,
        config: MonitorConfig,
        sink=None,
        session_id: str = "s0",
        aggregate: Optional[AggregateStats] = None,
    ):
        self.automaton = automaton
        self.config = config
        self.sink = sink if sink is not None else NullSink()
        self.session_id = session_id
        self.lock = threading.Lock()
        self._aggregate = aggregate
        self._state_id = automaton.initial
        self._stats: dict[int, ChoiceStats] = {}
        self._event_warned: dict[tuple[str, str], bool] = {}
        self._seq = 0
        self._ended = isinstance(automaton.state(automaton.initial), EndState)
        self._violated = False
        self._finished = False

    @property
    def ended(self) -> bool:
        return self._ended

    @property
    def violated(self) -> bool:
        return self._violated

    @property
    def done(self) -> bool:
        return self._ended or self._violated

    def _stats_for(self, state: ChoiceState) -> ChoiceStats:
        st = self._stats.get(state.id)
        if st is None:
            st = ChoiceStats(
                state.choice_point_id, {e.label: float(e.prob) for e in state.edges}
            )
            self._stats[state.id] = st
        return st

    def _emit(self, **kw) -> MonitorEvent:
        self._seq += 1
        event = MonitorEvent(
            session_id=self.session_id, seq=self._seq, timestamp_ms=_now_ms(), **kw
        )
        self.sink.emit(event)
        return event

    def _violation(self, direction: str, cp_id: str, label: str, detail: str) -> MonitorEvent:
        self._violated = True
        return self._emit(
            direction=direction,
            choice_point_id=cp_id,
            label=label,
            n=0,
            p_hat=0.0,
            ci_lo=0.0,
            ci_hi=0.0,
            verdict=Verdict.VIOLATION,
            detail=detail,
        )

    def step(self, msg: Union[TypedMessage, Unrecognized]) -> list[MonitorEvent]:
        """Advance on one message; returns the events it produced.

        Raises RuntimeError once a violation has been recorded: violations
        are terminal and further input is a caller bug.
        """
        if self._violated:
            raise RuntimeError(f"session {self.session_id} already ended in violation")

        if self._ended:
            shown = msg.label if isinstance(msg, TypedMessage) else msg.raw
            return [
                self._violation(
                    msg.direction, "", "", f"message {shown!r} after session end"
                )
            ]

        state = self.automaton.state(self._state_id)
        assert isinstance(state, ChoiceState)
        expected_dir = (
            self.config.perspective if state.polarity == "!" else opposite(self.config.perspective)
        )
        expected = ", ".join(state.labels)

        if isinstance(msg, Unrecognized):
            return [
                self._violation(
                    msg.direction,
                    state.choice_point_id,
                    "",
                    f"unrecognized message {msg.raw!r}; expected one of: {expected}",
                )
            ]
        if msg.direction != expected_dir:
            return [
                self._violation(
                    msg.direction,
                    state.choice_point_id,
                    msg.label,
                    f"message {msg.label} arrived from {msg.direction}, "
                    f"expected traffic from {expected_dir}",
                )
            ]
        edge = state.edge(msg.label)
        if edge is None:
            return [
                self._violation(
                    msg.direction,
                    state.choice_point_id,
                    msg.label,
                    f"unexpected label {msg.label}; expected one of: {expected}",
                )
            ]
        if edge.payload_sort is None:
            if msg.payload is not None:
                return [
                    self._violation(
                        msg.direction,
                        state.choice_point_id,
                        msg.label,
                        f"{msg.label} carries a payload but none is declared",
                    )
                ]
        elif not edge.payload_sort.accepts(msg.payload):
            return [
                self._violation(
                    msg.direction,
                    state.choice_point_id,
                    msg.label,
                    f"payload {msg.payload!r} is not a valid {edge.payload_sort.value}",
                )
            ]

        stats = self._stats_for(state)
        stats.observe(msg.label)
        if state.singleton:
            # probability 1 by construction: zero-width interval, always within
            verdict, p_hat, lo, hi = Verdict.OK, 1.0, 1.0, 1.0
        else:
            assessments = {
                a.label: a for a in stats.evaluate(self.config.ci, self.config.min_samples)
            }
            taken = assessments[msg.label]
            key = (state.choice_point_id, msg.label)
            was_warned = self._event_warned.get(key, False)
            if not taken.within and not was_warned:
                verdict = Verdict.WARNING_RAISED
                self._event_warned[key] = True
            elif taken.within and was_warned:
                verdict = Verdict.WARNING_RETRACTED
                self._event_warned[key] = False
            else:
                verdict = Verdict.OK
            p_hat, lo, hi = taken.estimate, taken.ci_lo, taken.ci_hi

        if self._aggregate is not None:
            self._aggregate.observe(state.choice_point_id, msg.label)

        events = [
            self._emit(
                direction=msg.direction,
                choice_point_id=state.choice_point_id,
                label=msg.label,
                n=stats.n,
                p_hat=p_hat,
                ci_lo=lo,
                ci_hi=hi,
                verdict=verdict,
            )
        ]
        self._state_id = edge.target
        if isinstance(self.automaton.state(self._state_id), EndState):
            self._ended = True
            events.append(
                self._emit(
                    direction="",
                    choice_point_id="",
                    label="",
                    n=0,
                    p_hat=0.0,
                    ci_lo=0.0,
                    ci_hi=0.0,
                    verdict=Verdict.SESSION_END,
                )
            )
        return events

    def finish(self) -> SessionSummary:
        """Close the session and return its summary. Idempotent."""
        if self._finished:
            return self._summary
        self._finished = True
        if self._violated:
            verdict = "violation"
        elif self._ended:
            verdict = "completed"
        else:
            verdict = "aborted"
        choice_points = {}
        for st in self._stats.values():
            choice_points[st.choice_point_id] = ChoicePointSummary(
                choice_point_id=st.choice_point_id,
                n=st.n,
                counts=dict(st.counts),
                estimates=st.estimates() if st.n else {},
                warned=dict(st.warned),
            )
        self._summary = SessionSummary(
            session_id=self.session_id,
            verdict=verdict,
            events=self._seq,
            choice_points=choice_points,
        )
        return self._summary


def run_session(
    automaton: MonitorAutomaton,
    config: MonitorConfig,
    sink,
    message_source: Iterable[Union[TypedMessage, Unrecognized]],
    session_id: str = "s0",
    aggregate: Optional[AggregateStats] = None,
) -> SessionSummary:
    """Step every message from the source until the session ends.

    Stops at session end or violation; an I/O failure in the source (or an
    exhausted source mid-protocol) yields an ``aborted`` summary.
    """
    session = MonitorSession(automaton, config, sink, session_id, aggregate)
    try:
        for msg in message_source:
            session.step(msg)
            if session.done:
                break
    except OSError:
        pass  # summary comes out aborted below
    summary = session.finish()
    if aggregate is not None and config.aggregate:
        aggregate.emit_rows(automaton, config, sink)
    return summary
