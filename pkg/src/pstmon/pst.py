"""Probabilistic session types: syntax tree, parser, validator and printer.

A session type describes one endpoint of a two-party protocol. Choice
points carry a probability for every branch; the probabilities at a
choice point must form a distribution. ``!`` marks messages sent by the
endpoint the type describes, ``?`` marks messages it receives.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Optional, Union

SEND = "!"
RECEIVE = "?"

PROB_SUM_TOLERANCE = Fraction(1, 10**9)


class Sort(enum.Enum):
    """Payload base types. Closed enumeration; anything else is a parse error."""

    INT = "Int"
    STRING = "String"
    BOOL = "Bool"

    def accepts(self, value: object) -> bool:
        # bool is a subclass of int, so the checks are on exact types
        if self is Sort.INT:
            return type(value) is int
        if self is Sort.BOOL:
            return type(value) is bool
        return type(value) is str


_SORT_NAMES = {s.value: s for s in Sort}
_KEYWORDS = frozenset({"rec", "end"})


@dataclass(frozen=True)
class Pos:
    """Line/column of a syntax element, 1-based. Ignored by equality."""

    line: int = 0
    col: int = 0

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


_NO_POS = Pos()


@dataclass(frozen=True)
class Payload:
    name: str
    sort: Sort


@dataclass(frozen=True)
class Branch:
    polarity: str  # SEND or RECEIVE
    label: str
    payload: Optional[Payload]
    prob: Fraction
    cont: "SessionType"
    pos: Pos = field(default=_NO_POS, compare=False)


@dataclass(frozen=True)
class End:
    pos: Pos = field(default=_NO_POS, compare=False)


@dataclass(frozen=True)
class Var:
    name: str
    pos: Pos = field(default=_NO_POS, compare=False)


@dataclass(frozen=True)
class Rec:
    var: str
    body: "SessionType"
    pos: Pos = field(default=_NO_POS, compare=False)


@dataclass(frozen=True)
class InternalChoice:
    """``+{...}``: the described endpoint selects the branch (all ``!``)."""

    branches: tuple[Branch, ...]
    pos: Pos = field(default=_NO_POS, compare=False)


@dataclass(frozen=True)
class ExternalChoice:
    """``&{...}``: the peer selects the branch (all ``?``)."""

    branches: tuple[Branch, ...]
    pos: Pos = field(default=_NO_POS, compare=False)


SessionType = Union[End, Var, Rec, InternalChoice, ExternalChoice]
Choice = (InternalChoice, ExternalChoice)


class PstParseError(ValueError):
    """Parse failure with source position.

    ``kind`` is one of ``syntax``, ``sort`` (unknown sort name) or
    ``probability`` (malformed or out-of-range probability literal).
    """

    def __init__(self, message: str, line: int, col: int, kind: str = "syntax"):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col
        self.kind = kind


class ErrorKind(enum.Enum):
    PROB_SUM = "ProbSum"
    DUPLICATE_LABEL = "DuplicateLabel"
    UNGUARDED_REC = "UnguardedRec"
    UNBOUND_VAR = "UnboundVar"
    MIXED_POLARITY = "MixedPolarity"


@dataclass(frozen=True)
class WellFormednessError:
    kind: ErrorKind
    detail: str
    pos: Pos = field(default=_NO_POS, compare=False)

    def __str__(self) -> str:
        return f"{self.kind.value} at {self.pos}: {self.detail}"


# --------------------------------------------------------------------------
# Lexer
# --------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""(?P<ws>\s+)
      | (?P<comment>//[^\n]*)
      | (?P<number>\d+(?:\.\d+)?)
      | (?P<ident>[A-Za-z][A-Za-z0-9_]*)
      | (?P<punct>[!?+&{}()\[\].,:])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # "ident", "keyword", "number", "punct", "eof"
    text: str
    pos: Pos


def _lex(source: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, line_start = 1, 0
    i = 0
    while i < len(source):
        m = _TOKEN_RE.match(source, i)
        if m is None:
            raise PstParseError(
                f"unexpected character {source[i]!r}", line, i - line_start + 1
            )
        pos = Pos(line, m.start() - line_start + 1)
        group = m.lastgroup
        text = m.group()
        if group in ("ws", "comment"):
            for j, ch in enumerate(text):
                if ch == "\n":
                    line += 1
                    line_start = m.start() + j + 1
        elif group == "number":
            tokens.append(_Token("number", text, pos))
        elif group == "ident":
            kind = "keyword" if text in _KEYWORDS else "ident"
            tokens.append(_Token(kind, text, pos))
        else:
            tokens.append(_Token("punct", text, pos))
        i = m.end()
    tokens.append(_Token("eof", "", Pos(line, len(source) - line_start + 1)))
    return tokens


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self._tokens = tokens
        self._i = 0

    def _peek(self) -> _Token:
        return self._tokens[self._i]

    def _next(self) -> _Token:
        tok = self._tokens[self._i]
        self._i += 1
        return tok

    def _fail(self, message: str, tok: _Token, kind: str = "syntax") -> PstParseError:
        return PstParseError(message, tok.pos.line, tok.pos.col, kind)

    def _expect_punct(self, text: str) -> _Token:
        tok = self._next()
        if tok.kind != "punct" or tok.text != text:
            raise self._fail(f"expected {text!r}, found {tok.text or 'end of input'!r}", tok)
        return tok

    def _expect_ident(self, what: str) -> _Token:
        tok = self._next()
        if tok.kind != "ident":
            raise self._fail(f"expected {what}, found {tok.text or 'end of input'!r}", tok)
        return tok

    def parse_type(self) -> SessionType:
        tok = self._peek()
        if tok.kind == "keyword" and tok.text == "end":
            self._next()
            return End(tok.pos)
        if tok.kind == "keyword" and tok.text == "rec":
            self._next()
            var = self._expect_ident("recursion variable")
            self._expect_punct(".")
            body = self.parse_type()
            return Rec(var.text, body, tok.pos)
        if tok.kind == "ident":
            self._next()
            return Var(tok.text, tok.pos)
        if tok.kind == "punct" and tok.text in "+&":
            return self._parse_choice()
        if tok.kind == "punct" and tok.text in "!?":
            # bare prefix: singleton choice without braces
            branch = self._parse_branch()
            if branch.polarity == SEND:
                return InternalChoice((branch,), tok.pos)
            return ExternalChoice((branch,), tok.pos)
        if tok.kind == "punct" and tok.text == "(":
            self._next()
            inner = self.parse_type()
            self._expect_punct(")")
            return inner
        raise self._fail(f"expected a session type, found {tok.text or 'end of input'!r}", tok)

    def _parse_choice(self) -> SessionType:
        op = self._next()
        self._expect_punct("{")
        branches = [self._parse_branch()]
        while self._peek().text == ",":
            self._next()
            branches.append(self._parse_branch())
        self._expect_punct("}")
        if op.text == "+":
            return InternalChoice(tuple(branches), op.pos)
        return ExternalChoice(tuple(branches), op.pos)

    def _parse_branch(self) -> Branch:
        pol = self._next()
        if pol.kind != "punct" or pol.text not in "!?":
            raise self._fail(f"expected '!' or '?', found {pol.text!r}", pol)
        label = self._expect_ident("message label")
        self._expect_punct("(")
        payload = None
        if self._peek().text != ")":
            pname = self._expect_ident("payload variable")
            self._expect_punct(":")
            payload = Payload(pname.text, self._parse_sort())
            if self._peek().text == ",":
                raise self._fail("at most one payload per message", self._peek())
        self._expect_punct(")")
        self._expect_punct("[")
        prob = self._parse_prob()
        self._expect_punct("]")
        self._expect_punct(".")
        cont = self.parse_type()
        return Branch(pol.text, label.text, payload, prob, cont, pol.pos)

    def _parse_sort(self) -> Sort:
        tok = self._next()
        if tok.kind not in ("ident", "keyword") or tok.text not in _SORT_NAMES:
            raise self._fail(f"unknown sort {tok.text!r}", tok, kind="sort")
        return _SORT_NAMES[tok.text]

    def _parse_prob(self) -> Fraction:
        tok = self._next()
        if tok.kind != "number":
            raise self._fail(
                f"expected a probability literal, found {tok.text or 'end of input'!r}",
                tok,
                kind="probability",
            )
        if self._peek().text == ".":
            raise self._fail("malformed probability literal", self._peek(), kind="probability")
        value = Fraction(tok.text)
        if value > 1:
            raise self._fail(f"probability {tok.text} outside [0, 1]", tok, kind="probability")
        return value


def parse_pst(source: str) -> SessionType:
    """Parse a session type from text. Raises :class:`PstParseError`."""
    parser = _Parser(_lex(source))
    result = parser.parse_type()
    trailing = parser._peek()
    if trailing.kind != "eof":
        raise PstParseError(
            f"unexpected trailing input {trailing.text!r}",
            trailing.pos.line,
            trailing.pos.col,
        )
    return result


def parse_pst_file(path: str) -> SessionType:
    with open(path, "r", encoding="utf-8") as f:
        return parse_pst(f.read())


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------


def validate(t: SessionType) -> list[WellFormednessError]:
    """Check all well-formedness rules; an empty list means the type is valid.

    Iterative on an explicit stack so arbitrarily deep types never hit the
    interpreter recursion limit.
    """
    errors: list[WellFormednessError] = []
    # each entry: (node, {var: seen_choice_prefix_since_binding})
    stack: list[tuple[SessionType, dict[str, bool]]] = [(t, {})]
    while stack:
        node, env = stack.pop()
        if isinstance(node, End):
            continue
        if isinstance(node, Var):
            if node.name not in env:
                errors.append(
                    WellFormednessError(
                        ErrorKind.UNBOUND_VAR, f"variable {node.name} is not bound", node.pos
                    )
                )
            elif not env[node.name]:
                errors.append(
                    WellFormednessError(
                        ErrorKind.UNGUARDED_REC,
                        f"variable {node.name} occurs outside any choice prefix",
                        node.pos,
                    )
                )
            continue
        if isinstance(node, Rec):
            stack.append((node.body, {**env, node.var: False}))
            continue
        expected = SEND if isinstance(node, InternalChoice) else RECEIVE
        total = Fraction(0)
        seen: set[str] = set()
        for branch in node.branches:
            total += branch.prob
            if branch.label in seen:
                errors.append(
                    WellFormednessError(
                        ErrorKind.DUPLICATE_LABEL,
                        f"label {branch.label} appears more than once",
                        branch.pos,
                    )
                )
            seen.add(branch.label)
            if branch.polarity != expected:
                kind = "internal" if expected == SEND else "external"
                errors.append(
                    WellFormednessError(
                        ErrorKind.MIXED_POLARITY,
                        f"branch {branch.label} has polarity {branch.polarity!r} "
                        f"inside an {kind} choice",
                        branch.pos,
                    )
                )
        if abs(total - 1) > PROB_SUM_TOLERANCE:
            errors.append(
                WellFormednessError(
                    ErrorKind.PROB_SUM,
                    f"branch probabilities sum to {float(total):g}, expected 1",
                    node.pos,
                )
            )
        guarded = {v: True for v in env}
        # reversed so errors come out in source order off the LIFO stack
        for branch in reversed(node.branches):
            stack.append((branch.cont, guarded))
    return errors


# --------------------------------------------------------------------------
# Printing
# --------------------------------------------------------------------------


def prob_literal(p: Fraction) -> str:
    """Render an exact probability as the shortest decimal literal."""
    num, den = p.numerator, p.denominator
    twos = fives = 0
    d = den
    while d % 2 == 0:
        d //= 2
        twos += 1
    while d % 5 == 0:
        d //= 5
        fives += 1
    if d != 1:
        raise ValueError(f"probability {p} has no finite decimal representation")
    k = max(twos, fives)
    scaled = num * 10**k // den
    if k == 0:
        return str(scaled)
    digits = f"{scaled:0{k + 1}d}"
    return f"{digits[:-k]}.{digits[-k:]}"


def pretty_print(t: SessionType) -> str:
    """Render a type as source text; ``parse_pst(pretty_print(t)) == t``."""
    if isinstance(t, End):
        return "end"
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Rec):
        return f"rec {t.var}.{pretty_print(t.body)}"
    body = ", ".join(_print_branch(b) for b in t.branches)
    if len(t.branches) == 1:
        return body
    op = "+" if isinstance(t, InternalChoice) else "&"
    return f"{op}{{{body}}}"


def _print_branch(b: Branch) -> str:
    payload = f"{b.payload.name}: {b.payload.sort.value}" if b.payload else ""
    return f"{b.polarity}{b.label}({payload})[{prob_literal(b.prob)}].{pretty_print(b.cont)}"
