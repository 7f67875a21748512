"""Behavioral rule language: lexer, parser, type inference, clause splitting.

Network behavior is described as named IF/THEN rules over packet attributes:

    RULE1: IF (pkt_in.port_num EQ 0 AND pkt_in.src_ip EQ 192.168.1.1)
           THEN (pkt_out.src_ip EQ 10.0.0.10)

Grammar (AND binds tighter than OR, both left-associative):

    ruleset := rule+
    rule    := NAME ':' 'IF' expr 'THEN' expr
    expr    := '(' disj ')'
    disj    := conj ('OR' conj)*
    conj    := term ('AND' term)*
    term    := attr ('EQ' | 'NEQ') literal | expr
    attr    := ('pkt_in' | 'pkt_out') '.' NAME
    literal := INT | IPV4 | 'true' | 'false' | STRING

'#' starts a comment that runs to end of line.  Attribute names match
[a-z_][a-z0-9_]* and are typed by the literals they are compared against:
a dotted quad makes an attribute an IP address, bare digits make it an
integer, true/false a boolean, a double-quoted string a string.  The same
attribute must keep one type across every rule.

Each parsed rule is split into disjunction-free clauses (disjunctive normal
form), and every ruleset carries one extra clause named __default__ whose
meaning is "matched by packets that match no other clause".  THEN parts are
conjunctions; a THEN containing OR is rejected when clauses are built.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum


class RuleError(Exception):
    """Base class for rule language errors."""


class RuleSyntaxError(RuleError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col


class RuleTypeError(RuleError):
    """An attribute is compared against literals of two different types."""


class EmptyInputError(RuleError):
    """The rule text contains no rules."""


class ThenDisjunctionError(RuleError):
    """A THEN part contains OR, which has no single-packet meaning here."""


class LitType(Enum):
    INT = "Int"
    IP = "IpAddr"
    BOOL = "Bool"
    STRING = "String"


@dataclass(frozen=True)
class Literal:
    """A constant in canonical text form, e.g. ('Int', '42')."""

    type_tag: LitType
    text: str

    def source_form(self) -> str:
        if self.type_tag is LitType.STRING:
            return '"' + self.text + '"'
        return self.text

    def __str__(self) -> str:
        return self.source_form()


class Op(Enum):
    EQ = "EQ"
    NEQ = "NEQ"


class Side(Enum):
    IN = "pkt_in"
    OUT = "pkt_out"


@dataclass(frozen=True)
class Condition:
    side: Side
    attr: str
    op: Op
    literal: Literal

    def source_form(self) -> str:
        return (
            f"{self.side.value}.{self.attr} {self.op.value} "
            f"{self.literal.source_form()}"
        )


@dataclass(frozen=True)
class And:
    left: "BoolExpr"
    right: "BoolExpr"


@dataclass(frozen=True)
class Or:
    left: "BoolExpr"
    right: "BoolExpr"


BoolExpr = Condition | And | Or


@dataclass(frozen=True)
class Rule:
    name: str
    if_expr: BoolExpr
    then_expr: BoolExpr


DEFAULT_CLAUSE_NAME = "__default__"


@dataclass(frozen=True)
class ClauseRule:
    """One disjunction-free slice of a rule.

    The default clause has no conditions of its own; it is matched exactly
    by the packets that match no other clause.
    """

    source: str
    if_conditions: tuple[Condition, ...]
    then_conditions: tuple[Condition, ...]
    is_default: bool = False


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[Rule, ...]
    clauses: tuple[ClauseRule, ...]
    attributes: tuple[str, ...]
    attr_types: dict[str, LitType] = field(compare=False)
    constants: tuple[Literal, ...] = ()

    @staticmethod
    def from_rules(rules: list[Rule] | tuple[Rule, ...]) -> "RuleSet":
        return _build_ruleset(tuple(rules))


# === Lexer ==========================================================

class _Tok(Enum):
    NAME = "name"
    INT = "integer"
    IP = "IPv4 address"
    STRING = "string"
    LPAREN = "'('"
    RPAREN = "')'"
    COLON = "':'"
    DOT = "'.'"
    KW_IF = "'IF'"
    KW_THEN = "'THEN'"
    KW_AND = "'AND'"
    KW_OR = "'OR'"
    KW_EQ = "'EQ'"
    KW_NEQ = "'NEQ'"
    KW_IN = "'pkt_in'"
    KW_OUT = "'pkt_out'"
    KW_TRUE = "'true'"
    KW_FALSE = "'false'"
    EOF = "end of input"


_KEYWORDS = {
    "IF": _Tok.KW_IF,
    "THEN": _Tok.KW_THEN,
    "AND": _Tok.KW_AND,
    "OR": _Tok.KW_OR,
    "EQ": _Tok.KW_EQ,
    "NEQ": _Tok.KW_NEQ,
    "pkt_in": _Tok.KW_IN,
    "pkt_out": _Tok.KW_OUT,
    "true": _Tok.KW_TRUE,
    "false": _Tok.KW_FALSE,
}

_PUNCT = {"(": _Tok.LPAREN, ")": _Tok.RPAREN, ":": _Tok.COLON, ".": _Tok.DOT}


@dataclass(frozen=True)
class _Token:
    kind: _Tok
    text: str
    line: int
    col: int


def _is_name_start(c: str) -> bool:
    return c.isalpha() or c == "_"


def _is_name_char(c: str) -> bool:
    return c.isalnum() or c == "_"


def _lex(text: str) -> list[_Token]:
    toks: list[_Token] = []
    i = 0
    line = 1
    col = 1
    n = len(text)

    def err(msg: str) -> RuleSyntaxError:
        return RuleSyntaxError(msg, line, col)

    while i < n:
        c = text[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        start_col = col
        if c in _PUNCT:
            toks.append(_Token(_PUNCT[c], c, line, start_col))
            i += 1
            col += 1
            continue
        if c == '"':
            j = i + 1
            while j < n and text[j] not in '"\n':
                j += 1
            if j >= n or text[j] != '"':
                raise err("unterminated string literal")
            body = text[i + 1 : j]
            toks.append(_Token(_Tok.STRING, body, line, start_col))
            col += j + 1 - i
            i = j + 1
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            # A digit run followed by '.'digit is the start of a dotted quad.
            if j < n and text[j] == "." and j + 1 < n and text[j + 1].isdigit():
                octets = [text[i:j]]
                k = j
                while len(octets) < 4 and k < n and text[k] == ".":
                    k += 1
                    m = k
                    while m < n and text[m].isdigit():
                        m += 1
                    if m == k:
                        raise err("malformed IPv4 address")
                    octets.append(text[k:m])
                    k = m
                if len(octets) != 4:
                    raise err("malformed IPv4 address")
                for o in octets:
                    if len(o) > 1 and o[0] == "0":
                        raise err("IPv4 octet has a leading zero")
                    if int(o) > 255:
                        raise err("IPv4 octet out of range")
                lit = ".".join(octets)
                toks.append(_Token(_Tok.IP, lit, line, start_col))
                col += k - i
                i = k
                continue
            body = text[i:j]
            if len(body) > 1 and body[0] == "0":
                raise err("integer has a leading zero")
            toks.append(_Token(_Tok.INT, body, line, start_col))
            col += j - i
            i = j
            continue
        if _is_name_start(c):
            j = i
            while j < n and _is_name_char(text[j]):
                j += 1
            body = text[i:j]
            kind = _KEYWORDS.get(body, _Tok.NAME)
            toks.append(_Token(kind, body, line, start_col))
            col += j - i
            i = j
            continue
        raise err(f"unexpected character {c!r}")

    toks.append(_Token(_Tok.EOF, "", line, col))
    return toks


# === Parser =========================================================

class _Parser:
    def __init__(self, toks: list[_Token]):
        self.toks = toks
        self.pos = 0

    def peek(self) -> _Token:
        return self.toks[self.pos]

    def take(self) -> _Token:
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: _Tok) -> _Token:
        tok = self.peek()
        if tok.kind is not kind:
            raise self.fail(f"expected {kind.value}")
        return self.take()

    def fail(self, msg: str) -> RuleSyntaxError:
        tok = self.peek()
        got = tok.kind.value if tok.kind is _Tok.EOF else repr(tok.text)
        return RuleSyntaxError(f"{msg}, got {got}", tok.line, tok.col)

    def parse_ruleset(self) -> list[Rule]:
        rules = [self.parse_rule()]
        while self.peek().kind is not _Tok.EOF:
            rules.append(self.parse_rule())
        return rules

    def parse_rule(self) -> Rule:
        name_tok = self.expect(_Tok.NAME)
        self.expect(_Tok.COLON)
        self.expect(_Tok.KW_IF)
        if_expr = self.parse_paren_expr(Side.IN)
        self.expect(_Tok.KW_THEN)
        then_expr = self.parse_paren_expr(Side.OUT)
        return Rule(name_tok.text, if_expr, then_expr)

    def parse_paren_expr(self, side: Side) -> BoolExpr:
        self.expect(_Tok.LPAREN)
        expr = self.parse_disj(side)
        self.expect(_Tok.RPAREN)
        return expr

    def parse_disj(self, side: Side) -> BoolExpr:
        left = self.parse_conj(side)
        while self.peek().kind is _Tok.KW_OR:
            self.take()
            left = Or(left, self.parse_conj(side))
        return left

    def parse_conj(self, side: Side) -> BoolExpr:
        left = self.parse_term(side)
        while self.peek().kind is _Tok.KW_AND:
            self.take()
            left = And(left, self.parse_term(side))
        return left

    def parse_term(self, side: Side) -> BoolExpr:
        if self.peek().kind is _Tok.LPAREN:
            return self.parse_paren_expr(side)
        return self.parse_condition(side)

    def parse_condition(self, side: Side) -> Condition:
        tok = self.peek()
        if tok.kind not in (_Tok.KW_IN, _Tok.KW_OUT):
            raise self.fail(f"expected {_side_tok(side).value}")
        if (tok.kind is _Tok.KW_IN) != (side is Side.IN):
            want = _side_tok(side).value
            raise self.fail(f"expected {want} on this side of the rule")
        self.take()
        self.expect(_Tok.DOT)
        attr_tok = self.expect(_Tok.NAME)
        if not _valid_attr_name(attr_tok.text):
            raise RuleSyntaxError(
                f"attribute name {attr_tok.text!r} must match [a-z_][a-z0-9_]*",
                attr_tok.line,
                attr_tok.col,
            )
        op_tok = self.peek()
        if op_tok.kind is _Tok.KW_EQ:
            op = Op.EQ
        elif op_tok.kind is _Tok.KW_NEQ:
            op = Op.NEQ
        else:
            raise self.fail("expected 'EQ' or 'NEQ'")
        self.take()
        lit = self.parse_literal()
        return Condition(side, attr_tok.text, op, lit)

    def parse_literal(self) -> Literal:
        tok = self.peek()
        if tok.kind is _Tok.INT:
            self.take()
            return Literal(LitType.INT, tok.text)
        if tok.kind is _Tok.IP:
            self.take()
            return Literal(LitType.IP, tok.text)
        if tok.kind is _Tok.KW_TRUE or tok.kind is _Tok.KW_FALSE:
            self.take()
            return Literal(LitType.BOOL, tok.text)
        if tok.kind is _Tok.STRING:
            self.take()
            return Literal(LitType.STRING, tok.text)
        if tok.kind in (_Tok.KW_IN, _Tok.KW_OUT):
            raise self.fail(
                "expected a literal; comparing two attributes is not supported"
            )
        raise self.fail("expected a literal")


def _side_tok(side: Side) -> _Tok:
    return _Tok.KW_IN if side is Side.IN else _Tok.KW_OUT


def _valid_attr_name(name: str) -> bool:
    if not name or not (name[0].islower() or name[0] == "_"):
        return False
    return all(c == "_" or c.isdigit() or c.islower() for c in name)


# === Clause construction ============================================

def _dnf(expr: BoolExpr) -> list[list[Condition]]:
    if isinstance(expr, Condition):
        return [[expr]]
    if isinstance(expr, Or):
        return _dnf(expr.left) + _dnf(expr.right)
    if isinstance(expr, And):
        return [
            lc + rc
            for lc in _dnf(expr.left)
            for rc in _dnf(expr.right)
        ]
    raise TypeError(f"not a boolean expression: {expr!r}")


def _flatten_then(expr: BoolExpr, rule_name: str) -> list[Condition]:
    if isinstance(expr, Condition):
        return [expr]
    if isinstance(expr, And):
        return _flatten_then(expr.left, rule_name) + _flatten_then(
            expr.right, rule_name
        )
    raise ThenDisjunctionError(
        f"rule {rule_name}: THEN contains OR; a produced packet needs one "
        "definite value per attribute, write separate rules instead"
    )


def _dedupe(conds: list[Condition]) -> tuple[Condition, ...]:
    return tuple(dict.fromkeys(conds))


def to_dnf(rule: Rule) -> list[ClauseRule]:
    """Split one rule into clauses whose IF parts are pure conjunctions."""
    thens = _dedupe(_flatten_then(rule.then_expr, rule.name))
    return [
        ClauseRule(rule.name, _dedupe(conj), thens)
        for conj in _dnf(rule.if_expr)
    ]


def make_default_clause(rules: tuple[Rule, ...]) -> ClauseRule:
    """The complement clause: matched when no rule clause matches."""
    return ClauseRule(DEFAULT_CLAUSE_NAME, (), (), is_default=True)


def _iter_conditions(rules: tuple[Rule, ...]):
    def walk(expr: BoolExpr):
        if isinstance(expr, Condition):
            yield expr
        else:
            yield from walk(expr.left)
            yield from walk(expr.right)

    for rule in rules:
        yield from itertools.chain(walk(rule.if_expr), walk(rule.then_expr))


def _build_ruleset(rules: tuple[Rule, ...]) -> RuleSet:
    attr_types: dict[str, LitType] = {}
    attributes: dict[str, None] = {}
    constants: dict[Literal, None] = {}
    for cond in _iter_conditions(rules):
        seen = attr_types.get(cond.attr)
        lit_type = cond.literal.type_tag
        if seen is None:
            attr_types[cond.attr] = lit_type
        elif seen is not lit_type:
            raise RuleTypeError(
                f"attribute {cond.attr!r} is compared against {seen.value} "
                f"and {lit_type.value} literals"
            )
        attributes.setdefault(cond.attr, None)
        constants.setdefault(cond.literal, None)

    clauses: list[ClauseRule] = []
    for rule in rules:
        clauses.extend(to_dnf(rule))
    clauses.append(make_default_clause(rules))

    return RuleSet(
        rules=rules,
        clauses=tuple(clauses),
        attributes=tuple(attributes),
        attr_types=attr_types,
        constants=tuple(constants),
    )


def parse_rules(text: str) -> RuleSet:
    """Parse rule text into a RuleSet with clauses and inferred types."""
    toks = _lex(text)
    if toks[0].kind is _Tok.EOF:
        raise EmptyInputError("no rules found in input")
    parser = _Parser(toks)
    rules = parser.parse_ruleset()
    return _build_ruleset(tuple(rules))


# === Formatting =====================================================

def _format_expr(expr: BoolExpr) -> str:
    """Render without the outer parentheses; reparsing rebuilds this tree."""
    if isinstance(expr, Condition):
        return expr.source_form()
    if isinstance(expr, And):
        left = _format_expr(expr.left)
        if isinstance(expr.left, Or):
            left = f"({left})"
        right = _format_expr(expr.right)
        if isinstance(expr.right, (And, Or)):
            right = f"({right})"
        return f"{left} AND {right}"
    left = _format_expr(expr.left)
    right = _format_expr(expr.right)
    if isinstance(expr.right, Or):
        right = f"({right})"
    return f"{left} OR {right}"


def format_rule(rule: Rule) -> str:
    return (
        f"{rule.name}: IF ({_format_expr(rule.if_expr)}) "
        f"THEN ({_format_expr(rule.then_expr)})"
    )


def format_rules(ruleset: RuleSet) -> str:
    """Source text whose parse is structurally equal to `ruleset`."""
    return "\n".join(format_rule(rule) for rule in ruleset.rules) + "\n"
