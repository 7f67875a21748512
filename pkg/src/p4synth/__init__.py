"""Evolving P4-style packet programs from operator-written behavioral rules.

The pipeline: parse rules, lay out a register file, generate a judgment
trace, evolve primitive-sequence programs against it, and render the
winner as P4-style source.
"""

from .codegen import EmittedProgram, emit, parse_body
from .engine import (
    GpParams,
    RunStats,
    TimeBudgetExceeded,
    budget_schedule,
    evolve,
    make_offspring_pair,
    step_generation,
)
from .evaluator import (
    ContradictoryRules,
    FitnessValue,
    Trace,
    TracePacket,
    UnsatisfiableClause,
    ValueExhaustion,
    fitness,
    generate_trace,
    simulate,
)
from .genome import (
    EmptyRegisterFile,
    Primitive,
    PrimitiveKind,
    Program,
    UnbalancedProgram,
    crossover,
    enumerate_units,
    format_genotype,
    mutate,
    parse_genotype,
    random_primitive,
    random_program,
)
from .registers import (
    NoValidPair,
    Register,
    RegisterFile,
    build_registers,
    compatible_pairs,
)
from .rules import (
    ClauseRule,
    Condition,
    EmptyInputError,
    Literal,
    LitType,
    Rule,
    RuleError,
    RuleSet,
    RuleSyntaxError,
    RuleTypeError,
    ThenDisjunctionError,
    format_rules,
    make_default_clause,
    parse_rules,
    to_dnf,
)

__version__ = "0.1.0"
