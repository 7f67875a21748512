"""Trace generation, simulation, and fitness scoring."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from p4synth.evaluator import (
    ContradictoryRules,
    FitnessValue,
    Trace,
    TracePacket,
    UnsatisfiableClause,
    ValueExhaustion,
    fitness,
    generate_trace,
    merge_traces,
    simulate,
    value_universes,
)
from p4synth.genome import (
    ASSIGN,
    ENDIF,
    IF_EQ,
    Primitive,
    Program,
    UnbalancedProgram,
    random_program,
)
from p4synth.registers import build_registers
from p4synth.rules import LitType, Op, parse_rules

from conftest import NAT_RULES, reference_simulate

EMPTY = Program([])


def _trace(ruleset, rf, k=1, seed=42):
    return generate_trace(ruleset, rf, k, random.Random(seed))


# === FitnessValue ===================================================

def test_fitness_value_formatting_and_ratio():
    fv = FitnessValue(7, 9)
    assert str(fv) == "7/9 = 0.7778"
    assert fv.value == 7 / 9
    assert not fv.is_perfect
    assert FitnessValue(9, 9).is_perfect


def test_fitness_value_empty_trace_counts_as_perfect():
    fv = FitnessValue(0, 0)
    assert fv.value == 1.0
    assert fv.is_perfect


# === Value universes ================================================

def test_nat_value_universes_are_frozen(nat_ruleset):
    pools = value_universes(nat_ruleset)
    assert set(pools) == {LitType.INT, LitType.IP}
    # Rule constants first, then two sentinel values no rule mentions.
    assert [l.text for l in pools[LitType.INT]] == ["0", "1", "2", "3"]
    assert [l.text for l in pools[LitType.IP]] == [
        "192.168.1.1",
        "10.0.0.10",
        "203.0.113.1",
        "203.0.113.2",
    ]


def test_bool_universe_holds_both_values():
    rs = parse_rules(
        "B: IF (pkt_in.flag EQ true) THEN (pkt_out.mark EQ 1)\n"
    )
    pools = value_universes(rs)
    assert [l.text for l in pools[LitType.BOOL]] == ["true", "false"]
    assert [l.text for l in pools[LitType.INT]] == ["1", "2", "3"]


def test_string_universe_adds_fresh_names():
    rs = parse_rules('S: IF (pkt_in.tag EQ "a") THEN (pkt_out.tag EQ "b")\n')
    texts = [l.text for l in value_universes(rs)[LitType.STRING]]
    assert texts == ["a", "b", "zz_free_0", "zz_free_1"]


# === Trace generation ===============================================

def test_trace_shape_for_every_seed(nat_ruleset, nat_rf):
    pools = value_universes(nat_ruleset)
    clauses = [c for c in nat_ruleset.clauses if not c.is_default]
    for seed in range(30):
        trace = _trace(nat_ruleset, nat_rf, k=1, seed=seed)
        assert trace.a_p == 3
        assert len(trace.packets) == 3
        for pkt in trace.packets:
            # Exactly one output condition per attribute, every value
            # drawn from the per-type universe.
            assert [a for a, _, _ in pkt.output_conditions] == [
                "port_num",
                "src_ip",
                "dst_ip",
            ]
            for attr, lit in pkt.inputs.items():
                assert lit in pools[nat_ruleset.attr_types[attr]]
        for clause, pkt in zip(clauses, trace.packets):
            assert all(
                (pkt.inputs[c.attr] == c.literal) == (c.op is Op.EQ)
                for c in clause.if_conditions
            )
        last = trace.packets[-1]
        for clause in clauses:
            assert any(
                (last.inputs[c.attr] == c.literal) != (c.op is Op.EQ)
                for c in clause.if_conditions
            )
        # A packet matching no clause must leave every attribute alone.
        assert all(
            op is Op.EQ and lit == last.inputs[attr]
            for attr, op, lit in last.output_conditions
        )


def test_trace_is_frozen_for_one_seed(nat_ruleset, nat_rf):
    trace = _trace(nat_ruleset, nat_rf, k=1, seed=42)
    got = [
        (
            {a: l.text for a, l in pkt.inputs.items()},
            [(a, op.name, l.text) for a, op, l in pkt.output_conditions],
        )
        for pkt in trace.packets
    ]
    assert got == [
        (
            {"port_num": "0", "src_ip": "192.168.1.1", "dst_ip": "192.168.1.1"},
            [
                ("port_num", "EQ", "0"),
                ("src_ip", "EQ", "10.0.0.10"),
                ("dst_ip", "EQ", "192.168.1.1"),
            ],
        ),
        (
            {"port_num": "1", "src_ip": "192.168.1.1", "dst_ip": "10.0.0.10"},
            [
                ("port_num", "EQ", "1"),
                ("src_ip", "EQ", "192.168.1.1"),
                ("dst_ip", "EQ", "192.168.1.1"),
            ],
        ),
        (
            {"port_num": "2", "src_ip": "10.0.0.10", "dst_ip": "10.0.0.10"},
            [
                ("port_num", "EQ", "2"),
                ("src_ip", "EQ", "10.0.0.10"),
                ("dst_ip", "EQ", "10.0.0.10"),
            ],
        ),
    ]


def test_trace_multiplier_scales_packet_count(nat_ruleset, nat_rf):
    trace = _trace(nat_ruleset, nat_rf, k=4)
    assert len(trace.packets) == 12
    with pytest.raises(ValueError):
        generate_trace(nat_ruleset, nat_rf, 0, random.Random(0))


def test_overlapping_rules_merge_their_outputs():
    # One packet can match both clauses; their demands agree, so the
    # packet carries the union of the two THEN conditions.
    rs = parse_rules(
        "A: IF (pkt_in.x EQ 1) THEN (pkt_out.y EQ 2)\n"
        "B: IF (pkt_in.x NEQ 9) THEN (pkt_out.z EQ 3)\n"
    )
    rf = build_registers(rs)
    for seed in range(20):
        trace = generate_trace(rs, rf, 1, random.Random(seed))
        first = trace.packets[0]
        assert first.inputs["x"].text == "1"
        conds = {a: (op, l.text) for a, op, l in first.output_conditions}
        assert conds["y"] == (Op.EQ, "2")
        assert conds["z"] == (Op.EQ, "3")
        assert conds["x"] == (Op.EQ, first.inputs["x"].text)


def test_neq_outputs_survive_into_the_trace():
    rs = parse_rules("N: IF (pkt_in.x EQ 1) THEN (pkt_out.y NEQ 5)\n")
    rf = build_registers(rs)
    trace = generate_trace(rs, rf, 1, random.Random(3))
    conds = {a: (op, l.text) for a, op, l in trace.packets[0].output_conditions}
    assert conds["y"] == (Op.NEQ, "5")


def test_unsatisfiable_clause_is_reported():
    rs = parse_rules(
        "C: IF (pkt_in.x EQ 1 AND pkt_in.x EQ 2) THEN (pkt_out.y EQ 3)\n"
    )
    with pytest.raises(UnsatisfiableClause, match="cannot equal both"):
        generate_trace(rs, build_registers(rs), 1, random.Random(0))
    rs = parse_rules(
        "C: IF (pkt_in.x EQ 1 AND pkt_in.x NEQ 1) THEN (pkt_out.y EQ 3)\n"
    )
    with pytest.raises(UnsatisfiableClause, match="equal and differ"):
        generate_trace(rs, build_registers(rs), 1, random.Random(0))


def test_neq_conditions_can_exhaust_a_small_universe():
    rs = parse_rules(
        "C: IF (pkt_in.f NEQ true AND pkt_in.f NEQ false)\n"
        "   THEN (pkt_out.y EQ 3)\n"
    )
    with pytest.raises(UnsatisfiableClause, match="no remaining value"):
        generate_trace(rs, build_registers(rs), 1, random.Random(0))


def test_contradictory_rules_are_reported():
    rs = parse_rules(
        "A: IF (pkt_in.x EQ 1) THEN (pkt_out.y EQ 2)\n"
        "B: IF (pkt_in.x NEQ 9) THEN (pkt_out.y EQ 3)\n"
    )
    with pytest.raises(ContradictoryRules, match="pin y to different values"):
        generate_trace(rs, build_registers(rs), 1, random.Random(0))
    rs = parse_rules(
        "A: IF (pkt_in.x EQ 1) THEN (pkt_out.y EQ 2)\n"
        "B: IF (pkt_in.x NEQ 9) THEN (pkt_out.y NEQ 2)\n"
    )
    with pytest.raises(ContradictoryRules, match="both equal and not equal"):
        generate_trace(rs, build_registers(rs), 1, random.Random(0))
    rs = parse_rules(
        "A: IF (pkt_in.x EQ 1) THEN (pkt_out.y NEQ 2)\n"
        "B: IF (pkt_in.x NEQ 9) THEN (pkt_out.y NEQ 3)\n"
    )
    with pytest.raises(ContradictoryRules, match="several exclusions"):
        generate_trace(rs, build_registers(rs), 1, random.Random(0))


def test_rules_covering_the_whole_space_leave_no_default_packet():
    rs = parse_rules(
        "T: IF (pkt_in.flag EQ true) THEN (pkt_out.mark EQ 1)\n"
        "F: IF (pkt_in.flag EQ false) THEN (pkt_out.mark EQ 2)\n"
    )
    with pytest.raises(ValueExhaustion):
        generate_trace(rs, build_registers(rs), 1, random.Random(0))


def test_merge_traces_concatenates(nat_ruleset, nat_rf):
    a = _trace(nat_ruleset, nat_rf, seed=1)
    b = _trace(nat_ruleset, nat_rf, seed=2)
    merged = merge_traces(a, b)
    assert merged.packets == a.packets + b.packets
    assert merged.a_p == 3
    fa, fb, fm = (fitness(EMPTY, t, nat_rf) for t in (a, b, merged))
    assert (fm.satisfied, fm.total) == (
        fa.satisfied + fb.satisfied,
        fa.total + fb.total,
    )
    with pytest.raises(ValueError):
        merge_traces(a, Trace([], a_p=2))


# === Simulation =====================================================

def test_simulate_golden_guarded_rewrite(tiny_rf):
    # Registers: a=0, b=1, const 10.0.0.1=2, const 10.0.0.2=3.
    prog = Program(
        [
            Primitive(IF_EQ, (0, 2)),
            Primitive(ASSIGN, (1, 3)),
            Primitive(ENDIF),
        ]
    )
    lit = {l.text: l for l in value_universes(parse_rules(
        "SWAP: IF (pkt_in.a EQ 10.0.0.1) THEN (pkt_out.b EQ 10.0.0.2)\n"
    ))[LitType.IP]}
    hit = TracePacket({"a": lit["10.0.0.1"], "b": lit["203.0.113.1"]}, ())
    out = simulate(prog, tiny_rf, hit)
    assert out["b"].text == "10.0.0.2"
    assert out["a"].text == "10.0.0.1"
    miss = TracePacket({"a": lit["203.0.113.1"], "b": lit["203.0.113.2"]}, ())
    out = simulate(prog, tiny_rf, miss)
    assert out["b"].text == "203.0.113.2"


def test_simulate_rejects_unbalanced_and_missing_inputs(tiny_rf):
    with pytest.raises(UnbalancedProgram):
        simulate(Program([Primitive(ENDIF)]), tiny_rf, TracePacket({}, ()))
    with pytest.raises(KeyError, match="no input for attribute"):
        simulate(EMPTY, tiny_rf, TracePacket({}, ()))


def test_simulate_agrees_with_the_reference_interpreter(nat_ruleset, nat_rf):
    pools = value_universes(nat_ruleset)
    r = random.Random(0xFEED)
    for _ in range(300):
        prog = random_program(nat_rf, 0, 12, 0.6, r)
        pkt = TracePacket(
            {
                attr: r.choice(pools[nat_ruleset.attr_types[attr]])
                for attr in nat_ruleset.attributes
            },
            (),
        )
        assert simulate(prog, nat_rf, pkt) == reference_simulate(
            prog.code, nat_rf, pkt
        )


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_interpreter_routes_agree_everywhere(seed):
    rs = parse_rules(NAT_RULES)
    rf = build_registers(rs)
    pools = value_universes(rs)
    r = random.Random(seed)
    prog = random_program(rf, 0, 14, 0.7, r)
    pkt = TracePacket(
        {a: r.choice(pools[rs.attr_types[a]]) for a in rs.attributes}, ()
    )
    assert simulate(prog, rf, pkt) == reference_simulate(prog.code, rf, pkt)


# === Fitness ========================================================

def test_empty_program_scores_seven_ninths_on_every_nat_trace(
    nat_ruleset, nat_rf
):
    for seed in range(20):
        trace = _trace(nat_ruleset, nat_rf, k=1, seed=seed)
        fv = fitness(EMPTY, trace, nat_rf)
        assert (fv.satisfied, fv.total) == (7, 9)


def test_empty_program_is_perfect_on_a_default_only_trace(
    nat_ruleset, nat_rf
):
    trace = _trace(nat_ruleset, nat_rf, k=1, seed=11)
    default_only = Trace([trace.packets[-1]], a_p=trace.a_p)
    assert fitness(EMPTY, default_only, nat_rf).value == 1.0


def test_fitness_scales_with_the_trace_multiplier(nat_ruleset, nat_rf):
    trace = _trace(nat_ruleset, nat_rf, k=5, seed=9)
    fv = fitness(EMPTY, trace, nat_rf)
    assert (fv.satisfied, fv.total) == (35, 45)


def _recount(prog, trace, rf):
    # Independent recount: run each packet through the reference
    # interpreter and evaluate the stored conditions on Literal values.
    satisfied = 0
    for pkt in trace.packets:
        out = reference_simulate(prog.code, rf, pkt)
        for attr, op, lit in pkt.output_conditions:
            if (out[attr] == lit) == (op is Op.EQ):
                satisfied += 1
    return satisfied


def test_fitness_matches_an_independent_recount(nat_ruleset, nat_rf):
    trace = _trace(nat_ruleset, nat_rf, k=2, seed=5)
    r = random.Random(0xBEEF)
    for _ in range(200):
        prog = random_program(nat_rf, 0, 12, 0.6, r)
        fv = fitness(prog, trace, nat_rf)
        assert fv.total == 18
        assert fv.satisfied == _recount(prog, trace, nat_rf)


def test_perfect_fitness_for_a_hand_written_solution(nat_ruleset, nat_rf):
    # port_num=0, src_ip=1, dst_ip=2; consts 0=3, 192.168.1.1=4,
    # 10.0.0.10=5, 1=6 (layout frozen in test_registers).
    prog = Program(
        [
            Primitive(IF_EQ, (0, 6)),
            Primitive(IF_EQ, (2, 5)),
            Primitive(ASSIGN, (2, 4)),
            Primitive(ENDIF),
            Primitive(ENDIF),
            Primitive(IF_EQ, (0, 3)),
            Primitive(IF_EQ, (1, 4)),
            Primitive(ASSIGN, (1, 5)),
            Primitive(ENDIF),
            Primitive(ENDIF),
        ]
    )
    for seed in range(10):
        trace = _trace(nat_ruleset, nat_rf, k=2, seed=seed)
        assert fitness(prog, trace, nat_rf).is_perfect


def test_compiled_trace_is_cached_per_register_file(nat_ruleset, nat_rf):
    trace = _trace(nat_ruleset, nat_rf)
    first = trace.compiled(nat_rf)
    assert trace.compiled(nat_rf) is first
    other = build_registers(nat_ruleset)
    assert trace.compiled(other) is not first
