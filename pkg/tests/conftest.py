"""Shared fixtures and an independent reference interpreter.

The reference interpreter builds a block structure first and then walks
it recursively, so it shares no control-flow logic with the sequential
skip-scan interpreter in the package.  Equivalence tests between the two
routes therefore catch branch-handling bugs in either one.
"""

from __future__ import annotations

import random

import pytest

from p4synth.registers import (
    PrimitiveKind,
    RegisterFile,
    RegKind,
    build_registers,
)
from p4synth.rules import parse_rules

ASSIGN = PrimitiveKind.ASSIGN
IF_EQ = PrimitiveKind.IF_EQ
IF_NEQ = PrimitiveKind.IF_NEQ
ENDIF = PrimitiveKind.ENDIF

NAT_RULES = """\
RULE1: IF (pkt_in.port_num EQ 0 AND pkt_in.src_ip EQ 192.168.1.1)
       THEN (pkt_out.src_ip EQ 10.0.0.10)
RULE2: IF (pkt_in.port_num EQ 1 AND pkt_in.dst_ip EQ 10.0.0.10)
       THEN (pkt_out.dst_ip EQ 192.168.1.1)
"""

# A deliberately small rule file: two attributes and two constants of
# one shared type, giving a compact register file for exhaustive tests.
TINY_RULES = """\
SWAP: IF (pkt_in.a EQ 10.0.0.1) THEN (pkt_out.b EQ 10.0.0.2)
"""


@pytest.fixture
def nat_ruleset():
    return parse_rules(NAT_RULES)


@pytest.fixture
def nat_rf(nat_ruleset):
    return build_registers(nat_ruleset)


@pytest.fixture
def tiny_ruleset():
    return parse_rules(TINY_RULES)


@pytest.fixture
def tiny_rf(tiny_ruleset):
    return build_registers(tiny_ruleset)


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)


# === independent program validity checker ===========================

def assert_valid_program(code, rf: RegisterFile) -> None:
    """Check balance and per-primitive typing without package helpers."""
    depth = 0
    for prim in code:
        if prim.kind is ENDIF:
            assert prim.args == ()
            depth -= 1
            assert depth >= 0, "ENDIF without an open IF"
            continue
        a, b = prim.args
        ra, rb = rf.registers[a], rf.registers[b]
        assert ra.type_tag == rb.type_tag, "operands must share a type"
        if prim.kind is ASSIGN:
            assert ra.writable, "assignment into a read-only register"
            assert a != b, "self-assignment is a wasted primitive"
        else:
            assert prim.kind in (IF_EQ, IF_NEQ)
            depth += 1
    assert depth == 0, "unclosed IF at end of program"


# === reference interpreter (structure-first) ========================

class _RefAssign:
    def __init__(self, dst, src):
        self.dst, self.src = dst, src


class _RefIf:
    def __init__(self, kind, a, b, body):
        self.kind, self.a, self.b, self.body = kind, a, b, body


def _ref_parse(code, pos=0, nested=False):
    body = []
    while pos < len(code):
        prim = code[pos]
        if prim.kind is ENDIF:
            if not nested:
                raise AssertionError("unmatched ENDIF")
            return body, pos + 1
        if prim.kind is ASSIGN:
            body.append(_RefAssign(*prim.args))
            pos += 1
        else:
            inner, pos = _ref_parse(code, pos + 1, nested=True)
            body.append(_RefIf(prim.kind, *prim.args, inner))
    if nested:
        raise AssertionError("IF without ENDIF")
    return body, pos


def _ref_exec(block, regs):
    for node in block:
        if isinstance(node, _RefAssign):
            regs[node.dst] = regs[node.src]
        else:
            hit = regs[node.a] == regs[node.b]
            if hit == (node.kind is IF_EQ):
                _ref_exec(node.body, regs)


def reference_simulate(code, rf: RegisterFile, pkt) -> dict:
    """Tree-walking twin of simulate(); returns attribute outputs."""
    regs = []
    for reg in rf.registers:
        if reg.kind is RegKind.ATTRIBUTE:
            regs.append(pkt.inputs[reg.name])
        else:
            regs.append(reg.value)
    block, _ = _ref_parse(code)
    _ref_exec(block, regs)
    return {
        reg.name: regs[reg.index]
        for reg in rf.registers
        if reg.kind is RegKind.ATTRIBUTE
    }
