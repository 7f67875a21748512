"""Trace generation, the switch simulator, and fitness scoring.

Programs are judged against a trace: a set of input packets, each carrying
one expected output condition per attribute.  For every rule clause the
generator builds k packets whose inputs satisfy that clause; one extra
batch of k packets matches no clause at all and must leave every attribute
untouched.  Values are drawn from a small universe per type: the constants
the rules mention plus two fresh sentinel values that no rule uses, so a
program can only score by actually testing the right registers.

Fitness is the fraction of satisfied output conditions, counted exactly
with integers: satisfied / (packets * attributes).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .genome import (
    ASSIGN,
    ENDIF,
    IF_EQ,
    IF_NEQ,
    Primitive,
    Program,
    UnbalancedProgram,
    is_balanced,
)
from .registers import RegisterFile, RegKind
from .rules import ClauseRule, LitType, Literal, Op, RuleSet


class UnsatisfiableClause(Exception):
    """A clause's conditions admit no input packet."""


class ContradictoryRules(Exception):
    """Two rules matched by one packet demand incompatible outputs."""


class ValueExhaustion(Exception):
    """No packet can avoid every clause: the rules cover the whole space."""


OutCond = tuple[str, Op, Literal]


@dataclass
class TracePacket:
    inputs: dict[str, Literal]
    output_conditions: tuple[OutCond, ...]


@dataclass
class Trace:
    packets: list[TracePacket]
    a_p: int
    _compiled: "tuple[object, _CompiledTrace] | None" = field(
        default=None, repr=False, compare=False
    )

    def compiled(self, rf: RegisterFile) -> "_CompiledTrace":
        if self._compiled is None or self._compiled[0] is not rf:
            self._compiled = (rf, _compile_trace(self, rf))
        return self._compiled[1]


@dataclass(frozen=True)
class FitnessValue:
    satisfied: int
    total: int

    @property
    def value(self) -> float:
        if self.total == 0:
            return 1.0
        return self.satisfied / self.total

    @property
    def is_perfect(self) -> bool:
        return self.satisfied == self.total

    def __str__(self) -> str:
        return f"{self.satisfied}/{self.total} = {self.value:.4f}"


# === Value universes ================================================

def _int_sentinels(used: list[Literal]) -> list[Literal]:
    top = max((int(l.text) for l in used), default=-1)
    return [Literal(LitType.INT, str(top + 1)), Literal(LitType.INT, str(top + 2))]


def _ip_sentinels(used: list[Literal]) -> list[Literal]:
    taken = {l.text for l in used}
    out: list[Literal] = []
    for third in range(113, 256):
        for last in range(1, 255):
            cand = f"203.0.{third}.{last}"
            if cand not in taken:
                out.append(Literal(LitType.IP, cand))
                if len(out) == 2:
                    return out
    raise ValueExhaustion("no free IPv4 sentinel values")


def _bool_sentinels(used: list[Literal]) -> list[Literal]:
    # At most the unused half of {true, false}; the universe still holds
    # both values, which is enough for every NEQ draw.
    taken = {l.text for l in used}
    return [
        Literal(LitType.BOOL, text)
        for text in ("true", "false")
        if text not in taken
    ]


def _string_sentinels(used: list[Literal]) -> list[Literal]:
    taken = {l.text for l in used}
    out: list[Literal] = []
    i = 0
    while len(out) < 2:
        cand = f"zz_free_{i}"
        if cand not in taken:
            out.append(Literal(LitType.STRING, cand))
        i += 1
    return out


def value_universes(ruleset: RuleSet) -> dict[LitType, list[Literal]]:
    """Per-type draw pools: rule constants plus fresh sentinel values."""
    pools: dict[LitType, list[Literal]] = {}
    needed = set(ruleset.attr_types.values())
    needed.update(l.type_tag for l in ruleset.constants)
    makers = {
        LitType.INT: _int_sentinels,
        LitType.IP: _ip_sentinels,
        LitType.BOOL: _bool_sentinels,
        LitType.STRING: _string_sentinels,
    }
    for type_tag in LitType:
        if type_tag not in needed:
            continue
        used = [l for l in ruleset.constants if l.type_tag is type_tag]
        pools[type_tag] = used + makers[type_tag](used)
    return pools


# === Packet construction ============================================

def _clause_label(clause: ClauseRule) -> str:
    conds = " AND ".join(c.source_form() for c in clause.if_conditions)
    return f"{clause.source} ({conds})" if conds else clause.source


def _clause_constraints(
    clause: ClauseRule,
) -> tuple[dict[str, Literal], dict[str, set[Literal]]]:
    eqs: dict[str, Literal] = {}
    neqs: dict[str, set[Literal]] = {}
    for cond in clause.if_conditions:
        if cond.op is Op.EQ:
            prior = eqs.get(cond.attr)
            if prior is not None and prior != cond.literal:
                raise UnsatisfiableClause(
                    f"{_clause_label(clause)}: {cond.attr} cannot equal both "
                    f"{prior} and {cond.literal}"
                )
            eqs[cond.attr] = cond.literal
        else:
            neqs.setdefault(cond.attr, set()).add(cond.literal)
    for attr, lit in eqs.items():
        if lit in neqs.get(attr, ()):
            raise UnsatisfiableClause(
                f"{_clause_label(clause)}: {attr} must equal and differ "
                f"from {lit}"
            )
    return eqs, neqs


def _clause_packet_inputs(
    ruleset: RuleSet,
    clause: ClauseRule,
    pools: dict[LitType, list[Literal]],
    rng: random.Random,
) -> dict[str, Literal]:
    eqs, neqs = _clause_constraints(clause)
    inputs: dict[str, Literal] = {}
    for attr in ruleset.attributes:
        pool = pools[ruleset.attr_types[attr]]
        if attr in eqs:
            inputs[attr] = eqs[attr]
        elif attr in neqs:
            allowed = [v for v in pool if v not in neqs[attr]]
            if not allowed:
                raise UnsatisfiableClause(
                    f"{_clause_label(clause)}: no remaining value for {attr}"
                )
            inputs[attr] = rng.choice(allowed)
        else:
            inputs[attr] = rng.choice(pool)
    return inputs


def _matches(clause: ClauseRule, inputs: dict[str, Literal]) -> bool:
    for cond in clause.if_conditions:
        if (inputs[cond.attr] == cond.literal) is not (cond.op is Op.EQ):
            return False
    return True


def _default_packet_inputs(
    ruleset: RuleSet,
    clauses: list[ClauseRule],
    pools: dict[LitType, list[Literal]],
    rng: random.Random,
) -> dict[str, Literal]:
    for _ in range(100):
        inputs = {
            attr: rng.choice(pools[ruleset.attr_types[attr]])
            for attr in ruleset.attributes
        }
        if not any(_matches(c, inputs) for c in clauses):
            return inputs
    # Systematic construction: start from all-sentinel inputs (no EQ on a
    # rule constant can hold there) and repair remaining matches by
    # violating one condition of each matching clause.
    inputs = {}
    for attr in ruleset.attributes:
        pool = pools[ruleset.attr_types[attr]]
        fresh = [v for v in pool if v not in ruleset.constants]
        inputs[attr] = fresh[0] if fresh else rng.choice(pool)
    for _ in range(100):
        matched = [c for c in clauses if _matches(c, inputs)]
        if not matched:
            return inputs
        for clause in matched:
            cond = clause.if_conditions[0]
            if cond.op is Op.EQ:
                pool = pools[ruleset.attr_types[cond.attr]]
                fresh = [
                    v
                    for v in pool
                    if v != cond.literal and v not in ruleset.constants
                ]
                others = fresh or [v for v in pool if v != cond.literal]
                inputs[cond.attr] = others[0]
            else:
                inputs[cond.attr] = cond.literal
    raise ValueExhaustion(
        "the rule clauses cover every possible packet, so no packet can "
        "exercise the default keep-everything behavior"
    )


def _merge_output_conditions(
    ruleset: RuleSet,
    matched: list[ClauseRule],
    inputs: dict[str, Literal],
) -> tuple[OutCond, ...]:
    demanded: dict[str, list[tuple[Op, Literal]]] = {}
    sources: dict[str, list[str]] = {}
    for clause in matched:
        for cond in clause.then_conditions:
            pairs = demanded.setdefault(cond.attr, [])
            if (cond.op, cond.literal) not in pairs:
                pairs.append((cond.op, cond.literal))
            sources.setdefault(cond.attr, []).append(clause.source)

    out: list[OutCond] = []
    for attr in ruleset.attributes:
        pairs = demanded.get(attr)
        if not pairs:
            # Unconstrained attributes must come out untouched.
            out.append((attr, Op.EQ, inputs[attr]))
            continue
        eq_vals = [lit for op, lit in pairs if op is Op.EQ]
        neq_vals = [lit for op, lit in pairs if op is Op.NEQ]
        who = ", ".join(dict.fromkeys(sources[attr]))
        if len(set(eq_vals)) > 1:
            raise ContradictoryRules(
                f"rules {who} pin {attr} to different values "
                f"({', '.join(str(v) for v in eq_vals)}) on one packet"
            )
        if eq_vals:
            if eq_vals[0] in neq_vals:
                raise ContradictoryRules(
                    f"rules {who} require {attr} both equal and not equal "
                    f"to {eq_vals[0]} on one packet"
                )
            out.append((attr, Op.EQ, eq_vals[0]))
        elif len(neq_vals) == 1:
            out.append((attr, Op.NEQ, neq_vals[0]))
        else:
            # Two distinct NEQ demands cannot be expressed as the single
            # per-attribute condition a trace packet carries.
            raise ContradictoryRules(
                f"rules {who} place several exclusions on {attr} for one "
                "packet; one output condition per attribute is the limit"
            )
    return tuple(out)


def generate_trace(
    ruleset: RuleSet, rf: RegisterFile, k: int, rng: random.Random
) -> Trace:
    """k packets per clause plus k matching no clause at all.

    Output conditions come from every clause a packet happens to match,
    and every unconstrained attribute gets a keep-the-input condition, so
    each packet checks exactly one condition per attribute.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    pools = value_universes(ruleset)
    rule_clauses = [c for c in ruleset.clauses if not c.is_default]
    packets: list[TracePacket] = []
    for clause in rule_clauses:
        for _ in range(k):
            inputs = _clause_packet_inputs(ruleset, clause, pools, rng)
            assert _matches(clause, inputs)
            matched = [c for c in rule_clauses if _matches(c, inputs)]
            packets.append(
                TracePacket(
                    inputs,
                    _merge_output_conditions(ruleset, matched, inputs),
                )
            )
    for _ in range(k):
        inputs = _default_packet_inputs(ruleset, rule_clauses, pools, rng)
        assert not any(_matches(c, inputs) for c in rule_clauses)
        packets.append(
            TracePacket(inputs, _merge_output_conditions(ruleset, [], inputs))
        )
    return Trace(packets, a_p=len(ruleset.attributes))


def merge_traces(a: Trace, b: Trace) -> Trace:
    if a.a_p != b.a_p:
        raise ValueError("traces describe different attribute sets")
    return Trace(a.packets + b.packets, a.a_p)


# === Interpreter core ===============================================

def run_code(code: list[Primitive], regs: list, writable: list[bool]) -> None:
    """Interpret primitives over a mutable register array.

    Sequential scan; a false IF skips forward to its matching ENDIF,
    tracking nesting depth on the way.  Works over any value domain with
    equality (Literal objects here, interned ints on the fitness path).
    """
    i = 0
    n = len(code)
    while i < n:
        prim = code[i]
        kind = prim.kind
        if kind is ENDIF:
            pass
        elif kind is IF_EQ or kind is IF_NEQ:
            a, b = prim.args
            if (regs[a] == regs[b]) is not (kind is IF_EQ):
                depth = 1
                while depth:
                    i += 1
                    k2 = code[i].kind
                    if k2 is ENDIF:
                        depth -= 1
                    elif k2 is IF_EQ or k2 is IF_NEQ:
                        depth += 1
        else:
            dst, src = prim.args
            assert writable[dst], "constant register written"
            regs[dst] = regs[src]
        i += 1


def simulate(p: Program, rf: RegisterFile, pkt: TracePacket) -> dict[str, Literal]:
    """Run one packet through a program; returns the output attributes."""
    if not is_balanced(p.code):
        raise UnbalancedProgram("cannot simulate an unbalanced program")
    regs: list[Literal | None] = [None] * len(rf)
    for reg in rf.registers:
        if reg.kind is RegKind.ATTRIBUTE:
            try:
                regs[reg.index] = pkt.inputs[reg.name]
            except KeyError:
                raise KeyError(
                    f"packet has no input for attribute {reg.name!r}"
                ) from None
        else:
            regs[reg.index] = reg.value
    run_code(p.code, regs, rf.writable)
    return {
        reg.name: regs[reg.index]
        for reg in rf.registers
        if reg.kind is RegKind.ATTRIBUTE
    }


# === Fitness ========================================================

@dataclass
class _CompiledTrace:
    """Interned-value form of a trace for fast repeated evaluation."""

    init_regs: list[list[int]]
    conditions: list[list[tuple[int, bool, int]]]
    total: int


def _compile_trace(trace: Trace, rf: RegisterFile) -> _CompiledTrace:
    intern: dict[Literal, int] = {}

    def vid(lit: Literal) -> int:
        got = intern.get(lit)
        if got is None:
            got = len(intern)
            intern[lit] = got
        return got

    base = [0] * len(rf)
    for reg in rf.registers:
        if reg.kind is RegKind.CONSTANT:
            base[reg.index] = vid(reg.value)

    init_regs: list[list[int]] = []
    conditions: list[list[tuple[int, bool, int]]] = []
    total = 0
    for pkt in trace.packets:
        regs = list(base)
        for attr, lit in pkt.inputs.items():
            regs[rf.attr_index[attr]] = vid(lit)
        init_regs.append(regs)
        conds = [
            (rf.attr_index[attr], op is Op.EQ, vid(lit))
            for attr, op, lit in pkt.output_conditions
        ]
        conditions.append(conds)
        total += len(conds)
    return _CompiledTrace(init_regs, conditions, total)


def _compile_code(code: list[Primitive]) -> list[tuple[int, int, int, int]]:
    """Rows of (op, a, b, jump): op 0=ASSIGN 1=IF_EQ 2=IF_NEQ 3=ENDIF.

    jump holds the matching ENDIF index for IF rows, so a false branch
    lands there in one step instead of rescanning for its pair.
    """
    rows: list[tuple[int, int, int, int]] = []
    stack: list[int] = []
    for i, prim in enumerate(code):
        kind = prim.kind
        if kind is ENDIF:
            rows.append((3, 0, 0, 0))
            j = stack.pop()
            op, a, b, _ = rows[j]
            rows[j] = (op, a, b, i)
        elif kind is ASSIGN:
            a, b = prim.args
            rows.append((0, a, b, 0))
        else:
            a, b = prim.args
            rows.append((1 if kind is IF_EQ else 2, a, b, 0))
            stack.append(i)
    return rows


def fitness(p: Program, trace: Trace, rf: RegisterFile) -> FitnessValue:
    """Exact satisfied-condition count over the whole trace."""
    compiled = trace.compiled(rf)
    rows = _compile_code(p.code)
    n = len(rows)
    satisfied = 0
    for init, conds in zip(compiled.init_regs, compiled.conditions):
        regs = list(init)
        i = 0
        while i < n:
            op, a, b, jump = rows[i]
            if op == 0:
                regs[a] = regs[b]
            elif op != 3 and (regs[a] == regs[b]) is not (op == 1):
                i = jump
            i += 1
        for reg_i, want_eq, val in conds:
            if (regs[reg_i] == val) is want_eq:
                satisfied += 1
    return FitnessValue(satisfied, compiled.total)
