"""The evolution engine: tournaments, restarts, and the budget schedule.

Each generation holds two independent tournaments over random samples of
the population.  The best member of each tournament breeds; the worst
n_r members of each are replaced by the offspring.  Fitness is computed
once, when a program is created, so a generation costs exactly 2 * n_r
evaluations no matter how large the tournaments are.

The outer loop restarts evolution from a fresh population whenever an
iteration budget runs out, doubling the budget each time up to a cap.
A candidate that scores 1.0 must confirm itself on a freshly generated
trace before it is accepted; failing that, evolution continues against
the union of both traces.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Iterator

from .evaluator import Trace, fitness, generate_trace, merge_traces
from .genome import (
    EmptyRegisterFile,
    Program,
    crossover,
    mutate,
    random_program,
)
from .registers import RegisterFile, build_registers
from .rules import RuleSet


class TimeBudgetExceeded(Exception):
    """Wall clock ran out; carries the best program found and its stats."""

    def __init__(self, best: Program, stats: "RunStats"):
        super().__init__(
            f"no solution within {stats.wall_clock:.1f}s "
            f"(best fitness {best.fitness.value:.4f})"
        )
        self.best = best
        self.stats = stats


@dataclass
class GpParams:
    """Knobs for one evolution run.

    The defaults match the reference configuration this engine is tuned
    around; population_size, tournament_ratio, and tournament_losers
    interlock (two tournaments of ceil(tournament_ratio * population_size)
    members each must fit, and losers must be fewer than a tournament).
    """

    population_size: int = 3000
    init_iterations: int = 200
    max_iterations: int = 3000
    min_len: int = 1
    max_len: int = 10
    crossover_rate: float = 1.0
    mutation_rate: float = 0.4
    branch_rate: float = 0.5
    tournament_ratio: float = 0.05
    tournament_losers: int = 3
    trace_multiplier: int = 1
    bloat_cap: int = 200
    unit_scope: str = "all"
    seed: int | None = None
    wall_clock_limit: float = 600.0

    def __post_init__(self) -> None:
        t = self.tournament_size
        if t < 1:
            raise ValueError("tournament would be empty")
        if self.population_size < 2 * t:
            raise ValueError(
                "population must fit two tournaments of "
                f"{t} members (got {self.population_size})"
            )
        if not 1 <= self.tournament_losers < t:
            raise ValueError(
                f"tournament_losers must be in [1, {t - 1}]"
            )
        if not 1 <= self.init_iterations <= self.max_iterations:
            raise ValueError("need 1 <= init_iterations <= max_iterations")
        if not 0 <= self.min_len <= self.max_len:
            raise ValueError("need 0 <= min_len <= max_len")
        for name in ("crossover_rate", "mutation_rate", "branch_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be within [0, 1]")
        if self.trace_multiplier < 1:
            raise ValueError("trace_multiplier must be at least 1")
        if self.bloat_cap < self.max_len:
            raise ValueError(
                f"bloat_cap must be at least max_len (got {self.bloat_cap})"
            )
        if self.wall_clock_limit <= 0:
            raise ValueError("wall_clock_limit must be positive")
        if self.unit_scope not in ("all", "toplevel"):
            raise ValueError("unit_scope must be 'all' or 'toplevel'")

    @property
    def tournament_size(self) -> int:
        return math.ceil(self.tournament_ratio * self.population_size)

    def with_overrides(self, **kwargs) -> "GpParams":
        return replace(self, **kwargs)


PARAM_FIELDS = tuple(f.name for f in fields(GpParams))


@dataclass
class RunStats:
    """What one evolve() call did.

    trajectory records (cumulative generation, best fitness) points; it is
    non-decreasing between restarts and between validation rejections
    (a rejection rescoring the population against a grown trace may
    lower the running best).
    """

    restarts: int = 0
    generations_used: list[int] = field(default_factory=list)
    trajectory: list[tuple[int, float]] = field(default_factory=list)
    wall_clock: float = 0.0
    solution: Program | None = None
    validation_rejections: int = 0

    @property
    def solved(self) -> bool:
        return self.solution is not None

    @property
    def generations_total(self) -> int:
        return sum(self.generations_used)

    def to_dict(self) -> dict:
        return {
            "solved": self.solved,
            "restarts": self.restarts,
            "generations_used": list(self.generations_used),
            "generations_total": self.generations_total,
            "trajectory": [[g, v] for g, v in self.trajectory],
            "wall_clock_s": round(self.wall_clock, 3),
            "validation_rejections": self.validation_rejections,
        }


ProgressFn = Callable[[dict], None]


def budget_schedule(init_iterations: int, max_iterations: int) -> Iterator[int]:
    """Per-restart generation budgets: doubling, capped at the maximum."""
    budget = init_iterations
    while True:
        yield min(budget, max_iterations)
        budget *= 2


def _rng_streams(
    seed: int | None,
) -> tuple[random.Random, random.Random, random.Random]:
    """Independent trace, validation, and evolution streams off one seed."""
    master = random.Random(seed)
    return (
        random.Random(master.getrandbits(64)),
        random.Random(master.getrandbits(64)),
        random.Random(master.getrandbits(64)),
    )


def initial_trace(
    ruleset: RuleSet, rf: RegisterFile, params: GpParams
) -> Trace:
    """Exactly the trace evolve() starts from for these parameters."""
    trace_rng, _, _ = _rng_streams(params.seed)
    return generate_trace(ruleset, rf, params.trace_multiplier, trace_rng)


# === One generation =================================================

def make_offspring_pair(
    w1: Program,
    w2: Program,
    params: GpParams,
    trace: Trace,
    rf: RegisterFile,
    rng: random.Random,
) -> tuple[Program, Program]:
    """Duplicate two winners, maybe cross, maybe mutate, always score."""
    c1, c2 = w1.copy(), w2.copy()
    if rng.random() < params.crossover_rate:
        c1, c2 = crossover(c1, c2, rng, params.unit_scope)
    if rng.random() < params.mutation_rate:
        c1 = mutate(c1, rf, params.branch_rate, rng, params.bloat_cap)
    if rng.random() < params.mutation_rate:
        c2 = mutate(c2, rf, params.branch_rate, rng, params.bloat_cap)
    # Every offspring is scored at creation, even an untouched clone of
    # its parent.  Skipping clones would make a generation's cost depend
    # on the crossover and mutation rates (a no-op pair is free), which
    # skews any timing comparison across those rates.
    c1.fitness = fitness(c1, trace, rf)
    c2.fitness = fitness(c2, trace, rf)
    return c1, c2


def _interleave(a: list[int], b: list[int]) -> Iterator[int]:
    for x, y in zip(a, b):
        yield x
        yield y
    longer = a if len(a) > len(b) else b
    yield from longer[min(len(a), len(b)) :]


class _Scratch:
    """Reusable per-population state so a generation avoids rebuilds.

    indices is a permutation buffer for partial Fisher-Yates sampling;
    satisfied mirrors each member's fitness numerator for C-speed sort
    keys and must be kept in step with every replacement.  Fitness ties
    stay uniformly random: ordering them by program length or by age
    either culls neutral edits on arrival or lets them swamp selection,
    and both directions stall the search badly.
    """

    def __init__(self, pop: list[Program]):
        self.indices = list(range(len(pop)))
        self.satisfied = [prog.fitness.satisfied for prog in pop]


def _draw_tournament(
    scratch: _Scratch, t: int, rng: random.Random
) -> list[int]:
    # Partial Fisher-Yates: the first t cells become a uniform sample
    # without replacement, whatever permutation the buffer starts in.
    buf = scratch.indices
    n = len(buf)
    rand = rng.random
    for i in range(t):
        j = i + int(rand() * (n - i))
        buf[i], buf[j] = buf[j], buf[i]
    sample = buf[:t]
    # The buffer order is already random, so the stable sort breaks
    # fitness ties uniformly for winners and losers alike.
    sample.sort(key=scratch.satisfied.__getitem__)
    return sample


def step_generation(
    pop: list[Program],
    params: GpParams,
    trace: Trace,
    rf: RegisterFile,
    rng: random.Random,
    on_created: ProgressFn | None = None,
    scratch: _Scratch | None = None,
) -> list[Program]:
    """Run one tournament round in place and return the population.

    Tournament members are sampled without replacement (the two samples
    may overlap each other).  Exactly 2 * tournament_losers distinct
    non-winner programs are replaced by offspring of the two winners.
    """
    if scratch is None:
        scratch = _Scratch(pop)
    t = params.tournament_size
    n_r = params.tournament_losers
    sample_a = _draw_tournament(scratch, t, rng)
    sample_b = _draw_tournament(scratch, t, rng)
    winner_a, winner_b = sample_a[-1], sample_b[-1]

    slots: list[int] = []
    seen = {winner_a, winner_b}
    for idx in _interleave(sample_a[:-1], sample_b[:-1]):
        if idx in seen:
            continue
        seen.add(idx)
        slots.append(idx)
        if len(slots) == 2 * n_r:
            break
    if len(slots) < 2 * n_r:
        # Overlapping tournaments can run out of distinct losers; top up
        # with the worst of the rest so the replacement count holds.
        rest = [i for i in range(len(pop)) if i not in seen]
        rng.shuffle(rest)
        rest.sort(key=scratch.satisfied.__getitem__)
        slots.extend(rest[: 2 * n_r - len(slots)])

    children: list[Program] = []
    while len(children) < 2 * n_r:
        children.extend(
            make_offspring_pair(
                pop[winner_a], pop[winner_b], params, trace, rf, rng
            )
        )
    for slot, child in zip(slots, children):
        pop[slot] = child
        scratch.satisfied[slot] = child.fitness.satisfied
        if on_created is not None:
            on_created(child)
    return pop


# === Full run =======================================================

def evolve(
    ruleset: RuleSet,
    params: GpParams | None = None,
    progress: ProgressFn | None = None,
) -> tuple[Program, RunStats]:
    """Evolve until some program provably satisfies every trace condition.

    Runs restarts under the doubling budget schedule until a candidate
    reaches fitness 1.0 on the working trace and confirms it on a fresh
    validation trace.  Raises TimeBudgetExceeded when the wall clock
    limit passes first.
    """
    params = params or GpParams()
    rf = build_registers(ruleset)
    trace_rng, val_rng, evo_rng = _rng_streams(params.seed)

    k = params.trace_multiplier
    trace = generate_trace(ruleset, rf, k, trace_rng)
    stats = RunStats()
    started = time.perf_counter()
    gen_counter = 0
    best: Program | None = None

    def elapsed() -> float:
        return time.perf_counter() - started

    def emit(event: str, **extra) -> None:
        if progress is not None:
            payload = {
                "event": event,
                "restart": stats.restarts,
                "generation": gen_counter,
                "best_fitness": best.fitness.value if best else None,
                "elapsed_ms": round(elapsed() * 1000, 1),
            }
            payload.update(extra)
            progress(payload)

    def give_up(generations_this_restart: int):
        stats.generations_used.append(generations_this_restart)
        stats.wall_clock = elapsed()
        emit("timeout")
        raise TimeBudgetExceeded(best, stats)

    def accepted(candidate: Program) -> bool:
        """Confirm a perfect candidate on a fresh trace, or grow the trace."""
        nonlocal trace
        check = generate_trace(ruleset, rf, k, val_rng)
        if fitness(candidate, check, rf).is_perfect:
            return True
        stats.validation_rejections += 1
        trace = merge_traces(trace, check)
        emit("validation_rejected")
        return False

    def finish(candidate: Program, generations_this_restart: int):
        stats.generations_used.append(generations_this_restart)
        stats.solution = candidate
        stats.wall_clock = elapsed()
        emit("solved")
        return candidate, stats

    # The empty program is the zero-cost candidate; with no rules at all
    # it is the solution and no primitive could even be generated.
    empty = Program([])
    empty.fitness = fitness(empty, trace, rf)
    best = empty
    stats.trajectory.append((gen_counter, best.fitness.value))
    while empty.fitness.is_perfect:
        if accepted(empty):
            return finish(empty, 0)
        empty.fitness = fitness(empty, trace, rf)
    if len(rf) == 0:
        raise EmptyRegisterFile(
            "rules imply no registers yet the empty program fails"
        )

    for budget in budget_schedule(params.init_iterations, params.max_iterations):
        pop: list[Program] = []
        for j in range(params.population_size):
            if j % 512 == 0 and elapsed() > params.wall_clock_limit:
                give_up(0)
            prog = random_program(
                rf, params.min_len, params.max_len, params.branch_rate, evo_rng
            )
            prog.fitness = fitness(prog, trace, rf)
            pop.append(prog)
        scratch = _Scratch(pop)

        def rescan_best() -> Program:
            top = pop[0]
            for prog in pop:
                if prog.fitness.satisfied > top.fitness.satisfied:
                    top = prog
            return top

        best = rescan_best()
        stats.trajectory.append((gen_counter, best.fitness.value))
        emit("restart", budget=budget)

        generation = 0
        while True:
            # A perfect program is caught before any further breeding,
            # whether it appeared in the initial population or just now.
            while best.fitness.is_perfect:
                if accepted(best):
                    return finish(best, generation)
                if elapsed() > params.wall_clock_limit:
                    give_up(generation)
                for prog in pop:
                    prog.fitness = fitness(prog, trace, rf)
                scratch.satisfied = [p.fitness.satisfied for p in pop]
                best = rescan_best()
                stats.trajectory.append((gen_counter, best.fitness.value))
            if generation >= budget:
                break
            if elapsed() > params.wall_clock_limit:
                give_up(generation)
            generation += 1
            gen_counter += 1

            improved: list[Program] = []

            def note(child: Program) -> None:
                if child.fitness.satisfied > best.fitness.satisfied:
                    improved.append(child)

            step_generation(
                pop, params, trace, rf, evo_rng, on_created=note, scratch=scratch
            )
            for child in improved:
                if child.fitness.satisfied > best.fitness.satisfied:
                    best = child
            if improved:
                stats.trajectory.append((gen_counter, best.fitness.value))
                emit("improved")
        stats.generations_used.append(generation)
        stats.restarts += 1
        emit("restart_exhausted")
