"""Programs as primitive sequences, plus the operators that evolve them.

A program is a flat list of prefix-notation primitives:

    ASSIGN(dst, src)   copy one register into a writable one
    IF_EQ(a, b)        run the enclosed block when a == b
    IF_NEQ(a, b)       run the enclosed block when a != b
    ENDIF()            close the innermost open block

Every IF_EQ/IF_NEQ has a matching ENDIF; operators keep that balance by
construction: a freshly drawn IF always arrives with its ENDIF directly
behind it, removal takes both halves of a pair, and crossover swaps whole
units (a single non-IF primitive, or an IF..ENDIF block).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .registers import (
    NoValidPair,
    PrimitiveKind,
    RegisterFile,
    RegKind,
)
from .rules import Literal, LitType

ASSIGN = PrimitiveKind.ASSIGN
IF_EQ = PrimitiveKind.IF_EQ
IF_NEQ = PrimitiveKind.IF_NEQ
ENDIF = PrimitiveKind.ENDIF

BLOAT_CAP = 200


class EmptyRegisterFile(Exception):
    """No registers exist, so no primitive can be generated."""


class UnbalancedProgram(Exception):
    """IF/ENDIF pairing is broken."""


class GenotypeError(Exception):
    """A genotype text line does not describe a valid primitive."""


@dataclass(frozen=True)
class Primitive:
    kind: PrimitiveKind
    args: tuple[int, ...] = ()

    def __repr__(self) -> str:
        return f"{self.kind.value}{self.args!r}"


@dataclass
class Program:
    """A primitive sequence plus its cached fitness, if computed."""

    code: list[Primitive]
    fitness: "object | None" = field(default=None, compare=False)

    def __len__(self) -> int:
        return len(self.code)

    def copy(self) -> "Program":
        return Program(list(self.code))


def is_balanced(code: list[Primitive]) -> bool:
    depth = 0
    for prim in code:
        if prim.kind is IF_EQ or prim.kind is IF_NEQ:
            depth += 1
        elif prim.kind is ENDIF:
            depth -= 1
            if depth < 0:
                return False
    return depth == 0


def matching_endif(code: list[Primitive], i: int) -> int:
    """Index of the ENDIF closing the IF_* at index i."""
    depth = 0
    for j in range(i, len(code)):
        kind = code[j].kind
        if kind is IF_EQ or kind is IF_NEQ:
            depth += 1
        elif kind is ENDIF:
            depth -= 1
            if depth == 0:
                return j
    raise UnbalancedProgram(f"IF at index {i} has no matching ENDIF")


def matching_if(code: list[Primitive], j: int) -> int:
    """Index of the IF_* opened by the ENDIF at index j."""
    depth = 0
    for i in range(j, -1, -1):
        kind = code[i].kind
        if kind is ENDIF:
            depth += 1
        elif kind is IF_EQ or kind is IF_NEQ:
            depth -= 1
            if depth == 0:
                return i
    raise UnbalancedProgram(f"ENDIF at index {j} has no matching IF")


# === Random generation ==============================================

def random_primitive(
    rf: RegisterFile, branch_rate: float, rng: random.Random
) -> list[Primitive]:
    """One fresh primitive; an IF comes paired with its ENDIF.

    With probability branch_rate the result is an IF_EQ or IF_NEQ (either
    with equal chance), otherwise an assignment.  Register pairs are drawn
    uniformly from the compatible pairs for the chosen kind; NoValidPair
    propagates when the register file cannot host that kind.
    """
    if rng.random() < branch_rate:
        kind = IF_EQ if rng.random() < 0.5 else IF_NEQ
        a, b = rng.choice(rf.pairs(kind))
        return [Primitive(kind, (a, b)), Primitive(ENDIF)]
    dst, src = rng.choice(rf.pairs(ASSIGN))
    return [Primitive(ASSIGN, (dst, src))]


def random_program(
    rf: RegisterFile,
    min_len: int,
    max_len: int,
    branch_rate: float,
    rng: random.Random,
) -> Program:
    """Random balanced program of min_len..max_len+1 primitives.

    A target length is drawn uniformly from [min_len, max_len]; primitives
    are appended until the target is reached.  An IF drawn at the last
    slot brings its ENDIF along, which may overshoot the target by one.
    """
    if len(rf) == 0:
        raise EmptyRegisterFile("cannot generate primitives without registers")
    if not 0 <= min_len <= max_len:
        raise ValueError("need 0 <= min_len <= max_len")
    target = rng.randint(min_len, max_len)
    code: list[Primitive] = []
    while len(code) < target:
        code.extend(random_primitive(rf, branch_rate, rng))
    return Program(code)


# === Mutation =======================================================

def _remove_span(code: list[Primitive], i: int) -> int:
    """Remove the primitive at i (plus its pair half) and return the
    index where the removed span began."""
    kind = code[i].kind
    if kind is IF_EQ or kind is IF_NEQ:
        j = matching_endif(code, i)
        del code[j]
        del code[i]
        return i
    if kind is ENDIF:
        h = matching_if(code, i)
        del code[i]
        del code[h]
        return h
    del code[i]
    return i


def _fresh_primitives(
    rf: RegisterFile, branch_rate: float, rng: random.Random, room: int
) -> list[Primitive]:
    # With room for a single primitive only, an IF pair cannot fit.
    if room < 2:
        dst, src = rng.choice(rf.pairs(ASSIGN))
        return [Primitive(ASSIGN, (dst, src))]
    return random_primitive(rf, branch_rate, rng)


def mutate(
    p: Program,
    rf: RegisterFile,
    branch_rate: float,
    rng: random.Random,
    bloat_cap: int = BLOAT_CAP,
) -> Program:
    """One random edit: insert after i, remove at i, or replace at i.

    The three modes are equally likely and i is uniform over the program.
    Edits touching one half of an IF/ENDIF pair take the whole pair, and
    replacement is remove-then-insert at the same index.  An empty program
    always receives an insertion.  Inserts that would push the program
    past bloat_cap fall back to replacement.
    """
    code = list(p.code)
    if not code:
        return Program(_fresh_primitives(rf, branch_rate, rng, bloat_cap))
    i = rng.randrange(len(code))
    mode = rng.randrange(3)
    if mode == 0 and len(code) + 2 > bloat_cap:
        mode = 2
    if mode == 0:
        code[i + 1 : i + 1] = random_primitive(rf, branch_rate, rng)
    elif mode == 1:
        _remove_span(code, i)
    else:
        pos = _remove_span(code, i)
        fresh = _fresh_primitives(
            rf, branch_rate, rng, bloat_cap - len(code)
        )
        code[pos:pos] = fresh
    return Program(code)


# === Crossover ======================================================

def enumerate_units(
    code: list[Primitive], *, toplevel_only: bool = False
) -> list[tuple[int, int]]:
    """All swappable spans as (start, end) index pairs, end exclusive.

    Each non-IF primitive is a unit of its own and each IF..ENDIF block is
    one unit, at every nesting depth unless toplevel_only is set.  Units
    never partially overlap, and every index is covered by at least one.
    """
    units: list[tuple[int, int]] = []
    stack: list[int] = []
    for i, prim in enumerate(code):
        kind = prim.kind
        if kind is IF_EQ or kind is IF_NEQ:
            stack.append(i)
        elif kind is ENDIF:
            if not stack:
                raise UnbalancedProgram(f"stray ENDIF at index {i}")
            start = stack.pop()
            if not toplevel_only or not stack:
                units.append((start, i + 1))
        else:
            if not toplevel_only or not stack:
                units.append((i, i + 1))
    if stack:
        raise UnbalancedProgram(f"IF at index {stack[-1]} is never closed")
    return units


def crossover(
    p1: Program,
    p2: Program,
    rng: random.Random,
    unit_scope: str = "all",
) -> tuple[Program, Program]:
    """Swap one uniformly chosen unit of each parent.

    Offspring are fresh programs with cleared fitness; the combined
    primitive multiset of the pair is conserved exactly.  A parent with
    no units (the empty program) leaves both parents unchanged.
    """
    toplevel = unit_scope == "toplevel"
    units1 = enumerate_units(p1.code, toplevel_only=toplevel)
    units2 = enumerate_units(p2.code, toplevel_only=toplevel)
    if not units1 or not units2:
        return p1.copy(), p2.copy()
    s1, e1 = rng.choice(units1)
    s2, e2 = rng.choice(units2)
    c1 = p1.code[:s1] + p2.code[s2:e2] + p1.code[e1:]
    c2 = p2.code[:s2] + p1.code[s1:e1] + p2.code[e2:]
    return Program(c1), Program(c2)


# === Genotype text ==================================================

def _operand_text(rf: RegisterFile, index: int) -> str:
    reg = rf.registers[index]
    if reg.kind is RegKind.ATTRIBUTE:
        return reg.name
    return f"const:{reg.value.source_form()}"


def format_genotype(p: Program, rf: RegisterFile) -> str:
    """Line-per-primitive text form, e.g. `ASSIGN(src_ip, const:10.0.0.10)`."""
    lines = []
    for prim in p.code:
        args = ", ".join(_operand_text(rf, a) for a in prim.args)
        lines.append(f"{prim.kind.value}({args})")
    return "\n".join(lines) + ("\n" if lines else "")


def _parse_literal_text(text: str) -> Literal:
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return Literal(LitType.STRING, text[1:-1])
    if text in ("true", "false"):
        return Literal(LitType.BOOL, text)
    if text.count(".") == 3 and all(
        part.isdigit() for part in text.split(".")
    ):
        parts = text.split(".")
        if any(len(o) > 1 and o[0] == "0" for o in parts):
            raise GenotypeError(f"IPv4 octet has a leading zero: {text!r}")
        if any(int(o) > 255 for o in parts):
            raise GenotypeError(f"IPv4 octet out of range: {text!r}")
        return Literal(LitType.IP, text)
    if text.isdigit():
        if len(text) > 1 and text[0] == "0":
            raise GenotypeError(f"integer has a leading zero: {text!r}")
        return Literal(LitType.INT, text)
    raise GenotypeError(f"not a literal: {text!r}")


def _resolve_operand(rf: RegisterFile, text: str, line_no: int) -> int:
    if text in rf.attr_index:
        return rf.attr_index[text]
    if text.startswith("const:"):
        lit = _parse_literal_text(text[len("const:") :])
        index = rf.const_index.get(lit)
        if index is None:
            raise GenotypeError(
                f"line {line_no}: constant {lit.source_form()} is not in "
                "the register file"
            )
        return index
    raise GenotypeError(f"line {line_no}: unknown operand {text!r}")


def _split_args(body: str) -> list[str]:
    # Commas inside quoted strings do not separate arguments.
    args: list[str] = []
    current = []
    quoted = False
    for c in body:
        if c == '"':
            quoted = not quoted
            current.append(c)
        elif c == "," and not quoted:
            args.append("".join(current).strip())
            current = []
        else:
            current.append(c)
    tail = "".join(current).strip()
    if tail or args:
        args.append(tail)
    return args


def parse_genotype(text: str, rf: RegisterFile) -> Program:
    """Parse genotype text back into a validated program."""
    kinds = {k.value: k for k in PrimitiveKind}
    code: list[Primitive] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "(" not in line or not line.endswith(")"):
            raise GenotypeError(f"line {line_no}: expected KIND(args)")
        head, body = line.split("(", 1)
        kind = kinds.get(head.strip())
        if kind is None:
            raise GenotypeError(
                f"line {line_no}: unknown primitive {head.strip()!r}"
            )
        arg_texts = _split_args(body[:-1])
        if kind is ENDIF:
            if arg_texts:
                raise GenotypeError(f"line {line_no}: ENDIF takes no arguments")
            code.append(Primitive(ENDIF))
            continue
        if len(arg_texts) != 2:
            raise GenotypeError(
                f"line {line_no}: {kind.value} takes two arguments"
            )
        a = _resolve_operand(rf, arg_texts[0], line_no)
        b = _resolve_operand(rf, arg_texts[1], line_no)
        ra, rb = rf.registers[a], rf.registers[b]
        if ra.type_tag is not rb.type_tag:
            raise GenotypeError(
                f"line {line_no}: operands mix {ra.type_tag.value} "
                f"and {rb.type_tag.value}"
            )
        if kind is ASSIGN:
            if not ra.writable:
                raise GenotypeError(
                    f"line {line_no}: cannot assign to constant {ra.name}"
                )
            if a == b:
                raise GenotypeError(f"line {line_no}: self-assignment")
        code.append(Primitive(kind, (a, b)))
    if not is_balanced(code):
        raise UnbalancedProgram("genotype IF/ENDIF pairing is broken")
    return Program(code)
