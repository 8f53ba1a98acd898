"""Declarative line codecs: the translator/gatekeeper between wire text
and typed messages.

A codec file lists one rule per message label and direction: an anchored
regular expression with one capture group per payload, and a template
used to render the message back onto the wire. Lines no rule matches
decode to :class:`~pstmon.monitor.Unrecognized` and are forwarded
verbatim, leaving the violation report to the monitor.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from typing import Optional, Union

from .automaton import MonitorAutomaton, compile_type
from .monitor import CLIENT, SERVER, TypedMessage, Unrecognized, opposite
from .pst import SessionType, Sort

log = logging.getLogger(__name__)

FRAMINGS = {"LF": b"\n", "CRLF": b"\r\n"}


class CodecError(ValueError):
    pass


@dataclass(frozen=True)
class CodecRule:
    label: str
    direction: str  # side that sends this message
    pattern: re.Pattern
    payload: Optional[Sort]
    template: str

    def render(self, payload: Union[int, str, bool, None]) -> str:
        if self.payload is None:
            return self.template
        if self.payload is Sort.BOOL:
            text = "true" if payload else "false"
        else:
            text = str(payload)
        return self.template.replace("{0}", text)


@dataclass(frozen=True)
class CodecSpec:
    framing: str  # "LF" | "CRLF"
    rules: tuple[CodecRule, ...]

    @property
    def newline(self) -> bytes:
        return FRAMINGS[self.framing]


def _convert(sort: Sort, text: str) -> Union[int, str, bool, None]:
    """Parse a captured payload; None signals a failed conversion."""
    if sort is Sort.INT:
        try:
            return int(text)
        except ValueError:
            return None
    if sort is Sort.BOOL:
        lowered = text.lower()
        if lowered == "true":
            return True
        if lowered == "false":
            return False
        return None
    return text


def decode(spec: CodecSpec, direction: str, raw_line: str) -> Union[TypedMessage, Unrecognized]:
    """First rule for the direction whose pattern matches the whole line wins."""
    for rule in spec.rules:
        if rule.direction != direction:
            continue
        m = rule.pattern.fullmatch(raw_line)
        if m is None:
            continue
        if rule.payload is None:
            return TypedMessage(direction, rule.label, None)
        value = _convert(rule.payload, m.group(1))
        if value is None:
            continue  # capture failed sort conversion; keep scanning
        return TypedMessage(direction, rule.label, value)
    return Unrecognized(direction, raw_line)


def encode(spec: CodecSpec, msg: TypedMessage) -> str:
    for rule in spec.rules:
        if rule.label == msg.label and rule.direction == msg.direction:
            return rule.render(msg.payload)
    raise CodecError(f"no rule for label {msg.label} from {msg.direction}")


# --------------------------------------------------------------------------
# Loading and cross-checking against a session type
# --------------------------------------------------------------------------


def load_codec(
    path: str,
    pst: Optional[SessionType] = None,
    perspective: str = SERVER,
) -> CodecSpec:
    """Load a codec file; when a type is supplied, cross-check coverage."""
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    framing = doc.get("framing")
    if framing not in FRAMINGS:
        raise CodecError(f"framing must be 'LF' or 'CRLF', got {framing!r}")
    rules = []
    for entry in doc.get("rules", []):
        label = entry.get("label")
        direction = entry.get("direction")
        if direction not in (CLIENT, SERVER):
            raise CodecError(f"rule {label}: direction must be 'client' or 'server'")
        payload_name = entry.get("payload")
        payload = None
        if payload_name is not None:
            try:
                payload = Sort(payload_name)
            except ValueError:
                raise CodecError(f"rule {label}: unknown payload sort {payload_name!r}")
        try:
            pattern = re.compile(entry["pattern"])
        except re.error as e:
            raise CodecError(f"rule {label}: bad pattern: {e}")
        template = entry.get("template", "")
        if payload is not None and "{0}" not in template:
            raise CodecError(f"rule {label}: template is missing the {{0}} placeholder")
        if payload is None and "{0}" in template:
            raise CodecError(f"rule {label}: template has a placeholder but no payload")
        rules.append(CodecRule(label, direction, pattern, payload, template))
    spec = CodecSpec(framing, tuple(rules))
    if pst is not None:
        validate_codec(spec, compile_type(pst), perspective)
    _warn_on_overlap(spec)
    return spec


def validate_codec(spec: CodecSpec, automaton: MonitorAutomaton, perspective: str) -> None:
    """Every (label, direction) the automaton can produce needs exactly one
    rule with the right capture arity and payload sort."""
    needed: dict[tuple[str, str], Optional[Sort]] = {}
    for state in automaton.choice_states():
        direction = perspective if state.polarity == "!" else opposite(perspective)
        for edge in state.edges:
            key = (edge.label, direction)
            if key in needed and needed[key] != edge.payload_sort:
                raise CodecError(
                    f"label {edge.label} from {direction} occurs with conflicting payload sorts"
                )
            needed[key] = edge.payload_sort

    by_key: dict[tuple[str, str], list[CodecRule]] = {}
    for rule in spec.rules:
        by_key.setdefault((rule.label, rule.direction), []).append(rule)

    problems = []
    for (label, direction), sort in sorted(needed.items()):
        matching = by_key.get((label, direction), [])
        if not matching:
            problems.append(f"missing rule for {label} from {direction}")
            continue
        if len(matching) > 1:
            problems.append(f"duplicate rules for {label} from {direction}")
            continue
        rule = matching[0]
        if rule.payload != sort:
            want = sort.value if sort else "no payload"
            got = rule.payload.value if rule.payload else "no payload"
            problems.append(f"rule {label}: payload is {got}, type expects {want}")
            continue
        want_groups = 1 if sort else 0
        if rule.pattern.groups != want_groups:
            problems.append(
                f"rule {label}: pattern has {rule.pattern.groups} capture groups, "
                f"expected {want_groups}"
            )
    if problems:
        raise CodecError("; ".join(problems))


_SAMPLES = {None: None, Sort.INT: 0, Sort.STRING: "x", Sort.BOOL: True}


def _warn_on_overlap(spec: CodecSpec) -> None:
    for rule in spec.rules:
        sample = rule.render(_SAMPLES[rule.payload])
        matches = [
            r.label
            for r in spec.rules
            if r.direction == rule.direction and r.pattern.fullmatch(sample)
        ]
        if len(matches) > 1:
            log.warning(
                "codec patterns overlap: %s also matches the rendering of %s "
                "(rule order decides)",
                ", ".join(m for m in matches if m != rule.label),
                rule.label,
            )
