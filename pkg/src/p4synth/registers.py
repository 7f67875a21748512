"""Register model backing program synthesis and simulation.

Every distinct packet attribute and every distinct rule constant gets one
slot in a flat register array.  The pkt_in.X / pkt_out.X forms of an
attribute share a single register: programs read it, rewrite it in place,
and whatever is left at the end is the output packet.  Constant registers
are read only.

Primitives operate on register index pairs.  A pair is compatible with a
primitive kind when the types line up and, for assignment, the target is
writable; pair enumeration lives here so that program generation can only
ever draw well-typed primitives.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .rules import LitType, Literal, RuleSet


class NoValidPair(Exception):
    """A primitive kind has no compatible register pair in this file."""


class PrimitiveKind(Enum):
    ASSIGN = "ASSIGN"
    IF_EQ = "IF_EQ"
    IF_NEQ = "IF_NEQ"
    ENDIF = "ENDIF"


class RegKind(Enum):
    ATTRIBUTE = "attribute"
    CONSTANT = "constant"


@dataclass(frozen=True)
class Register:
    index: int
    kind: RegKind
    name: str
    type_tag: LitType
    writable: bool
    value: Literal | None = None


class RegisterFile:
    """Flat, ordered register array for one ruleset.

    Attributes come first in order of first appearance in the rules,
    then constants in order of first appearance.  The layout is a pure
    function of the ruleset, so identical rule text always produces an
    identical file.
    """

    def __init__(self, registers: tuple[Register, ...]):
        self.registers = registers
        self.attr_index: dict[str, int] = {}
        self.const_index: dict[Literal, int] = {}
        self.writable: list[bool] = []
        by_type: dict[LitType, list[int]] = {}
        for reg in registers:
            if reg.kind is RegKind.ATTRIBUTE:
                self.attr_index[reg.name] = reg.index
            else:
                self.const_index[reg.value] = reg.index
            by_type.setdefault(reg.type_tag, []).append(reg.index)
            self.writable.append(reg.writable)
        self.by_type: dict[LitType, tuple[int, ...]] = {
            t: tuple(idx) for t, idx in by_type.items()
        }
        self._pair_cache: dict[PrimitiveKind, tuple[tuple[int, int], ...]] = {}

    def __len__(self) -> int:
        return len(self.registers)

    @property
    def attribute_registers(self) -> list[Register]:
        return [r for r in self.registers if r.kind is RegKind.ATTRIBUTE]

    def pairs(self, kind: PrimitiveKind) -> tuple[tuple[int, int], ...]:
        cached = self._pair_cache.get(kind)
        if cached is None:
            cached = tuple(_enumerate_pairs(self, kind))
            self._pair_cache[kind] = cached
        if not cached:
            raise NoValidPair(
                f"no compatible register pair for {kind.value}: need "
                + (
                    "a writable register plus a second register of its type"
                    if kind is PrimitiveKind.ASSIGN
                    else "two registers of one type"
                )
            )
        return cached


def build_registers(ruleset: RuleSet) -> RegisterFile:
    """One register per distinct attribute, then one per distinct constant."""
    regs: list[Register] = []
    for name in ruleset.attributes:
        regs.append(
            Register(
                index=len(regs),
                kind=RegKind.ATTRIBUTE,
                name=name,
                type_tag=ruleset.attr_types[name],
                writable=True,
            )
        )
    for lit in ruleset.constants:
        regs.append(
            Register(
                index=len(regs),
                kind=RegKind.CONSTANT,
                name=lit.source_form(),
                type_tag=lit.type_tag,
                writable=False,
                value=lit,
            )
        )
    return RegisterFile(tuple(regs))


def _enumerate_pairs(rf: RegisterFile, kind: PrimitiveKind):
    if kind is PrimitiveKind.ASSIGN:
        for indices in rf.by_type.values():
            for dst in indices:
                if not rf.registers[dst].writable:
                    continue
                for src in indices:
                    if src != dst:
                        yield (dst, src)
    elif kind in (PrimitiveKind.IF_EQ, PrimitiveKind.IF_NEQ):
        # Unordered pairs; constant-vs-constant comparisons are allowed.
        for indices in rf.by_type.values():
            for pos, a in enumerate(indices):
                for b in indices[pos + 1 :]:
                    yield (a, b)
    else:
        raise ValueError(f"{kind.value} takes no register pair")


def compatible_pairs(
    rf: RegisterFile, kind: PrimitiveKind
) -> list[tuple[int, int]]:
    """All register pairs a primitive of this kind may use.

    Raises NoValidPair when the file cannot host the kind at all, which
    callers treat as "skip generating this kind".
    """
    return list(rf.pairs(kind))


def debug_dump(rf: RegisterFile) -> list[dict]:
    """JSON-ready register listing for the --dump-registers flag."""
    return [
        {
            "index": reg.index,
            "kind": reg.kind.value,
            "name": reg.name,
            "type": reg.type_tag.value,
            "writable": reg.writable,
        }
        for reg in rf.registers
    ]
