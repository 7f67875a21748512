"""Command line interface.

    p4synth synth RULES -o OUT.p4     evolve a program for a rule file
    p4synth eval RULES GENOTYPE       score a genotype against a trace
    p4synth bench -o RUNS.CSV         repeated seeded runs, CSV out
    p4synth report RUNS.CSV -o DIR    summary table plus boxplot figures
    p4synth fixtures                  list the bundled example rule files

Exit codes: 0 success, 1 bad input, 2 synthesis ran out of wall clock.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources

from .bench import (
    BenchJob,
    CSV_HEADER,
    make_jobs,
    run_suite,
    tukey_summary,
    write_csv,
)
from .codegen import BodyParseError, emit
from .engine import (
    GpParams,
    PARAM_FIELDS,
    TimeBudgetExceeded,
    evolve,
    initial_trace,
)
from .evaluator import (
    ContradictoryRules,
    UnsatisfiableClause,
    ValueExhaustion,
    fitness,
    simulate,
)
from .genome import (
    GenotypeError,
    UnbalancedProgram,
    format_genotype,
    parse_genotype,
)
from .registers import NoValidPair, build_registers, debug_dump
from .rules import Op, RuleError, parse_rules

FIXTURE_NAMES = [
    "nat",
    "firewall",
    "server_balancer",
    "link_balancer",
    "dscp_marker",
    "router",
    "pat",
]

PARAM_ALIASES = {
    "N": "population_size",
    "init_it": "init_iterations",
    "max_it": "max_iterations",
    "P_c": "crossover_rate",
    "P_m": "mutation_rate",
    "P_if": "branch_rate",
    "p_if": "branch_rate",
    "t_r": "tournament_ratio",
    "n_r": "tournament_losers",
    "k": "trace_multiplier",
    "units": "unit_scope",
}

USER_ERRORS = (
    RuleError,
    GenotypeError,
    UnbalancedProgram,
    BodyParseError,
    ContradictoryRules,
    UnsatisfiableClause,
    ValueExhaustion,
    NoValidPair,
    ValueError,
    OSError,
)


def _coerce(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            continue
    return value


def _resolve_param_key(key: str) -> str:
    name = PARAM_ALIASES.get(key, key)
    if name not in PARAM_FIELDS:
        raise ValueError(f"unknown parameter {key!r}")
    return name


def _build_params(args: argparse.Namespace) -> GpParams:
    overrides = {}
    for item in args.param or []:
        if "=" not in item:
            raise ValueError(f"--param needs KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[_resolve_param_key(key.strip())] = _coerce(value.strip())
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "wall_clock_limit", None) is not None:
        overrides["wall_clock_limit"] = args.wall_clock_limit
    if getattr(args, "units", None):
        overrides["unit_scope"] = args.units
    return GpParams(**overrides)


def fixture_path(name: str) -> str:
    if name not in FIXTURE_NAMES:
        raise ValueError(
            f"unknown fixture {name!r}; available: {', '.join(FIXTURE_NAMES)}"
        )
    return str(resources.files("p4synth") / "fixtures" / f"{name}.rules")


def _read_rules_arg(arg: str) -> tuple[str, str]:
    """A rules argument is a fixture name or a path; returns (label, text)."""
    if arg in FIXTURE_NAMES:
        path = fixture_path(arg)
        label = arg
    else:
        path = arg
        label = arg.rsplit("/", 1)[-1].removesuffix(".rules")
    with open(path) as fh:
        return label, fh.read()


def _literal_json(lit) -> str:
    return lit.source_form()


def _dump_trace(trace, path: str) -> None:
    payload = [
        {
            "inputs": {k: _literal_json(v) for k, v in pkt.inputs.items()},
            "output_conditions": [
                [attr, op.value, _literal_json(lit)]
                for attr, op, lit in pkt.output_conditions
            ],
        }
        for pkt in trace.packets
    ]
    _write_json(path, payload)


def _write_json(path: str, payload) -> None:
    if path == "-":
        json.dump(payload, sys.stdout, indent=2)
        sys.stdout.write("\n")
        return
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


# === synth ==========================================================

def cmd_synth(args: argparse.Namespace) -> int:
    _, rules_text = _read_rules_arg(args.rules)
    ruleset = parse_rules(rules_text)
    params = _build_params(args)
    rf = build_registers(ruleset)

    if args.dump_registers:
        _write_json(args.dump_registers, debug_dump(rf))
    if args.dump_trace:
        _dump_trace(initial_trace(ruleset, rf, params), args.dump_trace)
    if args.dump_only:
        return 0

    progress = None
    if args.progress:
        progress = lambda event: print(
            json.dumps(event), file=sys.stderr, flush=True
        )

    stem = args.output.removesuffix(".p4")
    try:
        program, stats = evolve(ruleset, params, progress=progress)
        solved = True
    except TimeBudgetExceeded as exc:
        program, stats = exc.best, exc.stats
        solved = False

    emitted = emit(program, rf)
    with open(f"{stem}.p4", "w") as fh:
        fh.write(emitted.full_source)
    with open(f"{stem}.body.p4", "w") as fh:
        fh.write(emitted.body)
    with open(f"{stem}.genotype", "w") as fh:
        fh.write(format_genotype(program, rf))
    payload = stats.to_dict()
    payload["seed"] = params.seed
    payload["genotype_length"] = len(program)
    _write_json(f"{stem}.stats.json", payload)

    if solved:
        print(
            f"solved in {stats.wall_clock:.2f}s "
            f"({stats.generations_total} generations, "
            f"{stats.restarts} restarts)"
        )
    else:
        print(
            f"no solution within {params.wall_clock_limit:.1f}s; best "
            f"fitness {program.fitness.value:.4f}",
            file=sys.stderr,
        )
    for suffix in (".p4", ".body.p4", ".genotype", ".stats.json"):
        print(f"wrote {stem}{suffix}")
    return 0 if solved else 2


# === eval ===========================================================

def cmd_eval(args: argparse.Namespace) -> int:
    _, rules_text = _read_rules_arg(args.rules)
    ruleset = parse_rules(rules_text)
    params = _build_params(args)
    rf = build_registers(ruleset)
    with open(args.genotype) as fh:
        program = parse_genotype(fh.read(), rf)
    trace = initial_trace(ruleset, rf, params)

    overall = fitness(program, trace, rf)
    print(f"fitness: {overall}")
    for num, pkt in enumerate(trace.packets, start=1):
        inputs = ", ".join(f"{k}={v}" for k, v in pkt.inputs.items())
        print(f"packet {num}: {inputs}")
        outputs = simulate(program, rf, pkt)
        for attr, op, expected in pkt.output_conditions:
            got = outputs[attr]
            ok = (got == expected) is (op is Op.EQ)
            mark = "ok  " if ok else "FAIL"
            print(f"  {mark} {attr} {op.value} {expected} (got {got})")
    return 0


# === bench ==========================================================

def _parse_sweep(arg: str) -> tuple[str, list]:
    if "=" not in arg:
        raise ValueError(f"--sweep needs KEY=V1,V2,..., got {arg!r}")
    key, values = arg.split("=", 1)
    name = _resolve_param_key(key.strip())
    parsed = [_coerce(v.strip()) for v in values.split(",") if v.strip()]
    if not parsed:
        raise ValueError(f"--sweep {arg!r} lists no values")
    return name, parsed


def cmd_bench(args: argparse.Namespace) -> int:
    params = _build_params(args)
    names = args.fn or FIXTURE_NAMES
    functions = [_read_rules_arg(name) for name in names]
    sweep = _parse_sweep(args.sweep) if args.sweep else None
    jobs = make_jobs(
        functions,
        reps=args.reps,
        base_params=params,
        base_seed=args.base_seed,
        sweep=sweep,
    )
    rows = run_suite(jobs, jobs_parallel=args.jobs)
    write_csv(rows, args.output)
    print(f"wrote {args.output} ({len(rows)} rows: {','.join(CSV_HEADER)})")

    groups: dict[str, list[dict]] = {}
    for row in rows:
        groups.setdefault(row["function"], []).append(row)
    for label, group in groups.items():
        solved = [r for r in group if r["solved"] == 1]
        line = f"{label}: {len(solved)}/{len(group)} solved"
        if solved:
            s = tukey_summary([r["seconds"] for r in solved])
            line += (
                f"; seconds min/q1/med/q3/max = "
                f"{s['min']:.2f}/{s['q1']:.2f}/{s['median']:.2f}/"
                f"{s['q3']:.2f}/{s['max']:.2f}"
            )
        print(line)
    return 0


# === report =========================================================

def cmd_report(args: argparse.Namespace) -> int:
    from .report import render_report

    for path in render_report(args.csv, args.output):
        print(f"wrote {path}")
    return 0


# === fixtures =======================================================

def cmd_fixtures(args: argparse.Namespace) -> int:
    if args.path:
        print(fixture_path(args.path))
        return 0
    for name in FIXTURE_NAMES:
        print(f"{name}\t{fixture_path(name)}")
    return 0


# === argument wiring ================================================

def _add_param_options(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, default=None, help="run seed")
    sub.add_argument(
        "--param",
        action="append",
        metavar="KEY=VAL",
        help="override an engine parameter (aliases: N, init_it, max_it, "
        "P_c, P_m, P_if, t_r, n_r, k, units)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="p4synth",
        description="Evolve P4-style packet programs from behavioral rules.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    synth = subs.add_parser("synth", help="evolve a program for a rule file")
    synth.add_argument("rules", help="rule file path or fixture name")
    synth.add_argument("-o", "--output", required=True, metavar="OUT.p4")
    _add_param_options(synth)
    synth.add_argument(
        "--wall-clock-limit", type=float, default=None, metavar="SECONDS"
    )
    synth.add_argument(
        "--units", choices=["all", "toplevel"], default=None,
        help="crossover unit pool",
    )
    synth.add_argument(
        "--dump-trace", metavar="PATH", help="write the trace as JSON"
    )
    synth.add_argument(
        "--dump-registers", metavar="PATH", help="write the register file as JSON"
    )
    synth.add_argument(
        "--dump-only", action="store_true", help="stop after the dumps"
    )
    synth.add_argument(
        "--progress", action="store_true",
        help="line-delimited JSON progress events on stderr",
    )
    synth.set_defaults(handler=cmd_synth)

    ev = subs.add_parser("eval", help="score a genotype against a trace")
    ev.add_argument("rules", help="rule file path or fixture name")
    ev.add_argument("genotype", help="genotype text file")
    _add_param_options(ev)
    ev.set_defaults(handler=cmd_eval)

    bench = subs.add_parser("bench", help="repeated seeded runs, CSV out")
    bench.add_argument("-o", "--output", required=True, metavar="RUNS.CSV")
    bench.add_argument("--reps", type=int, default=100)
    bench.add_argument("--base-seed", type=int, default=0)
    bench.add_argument("--jobs", type=int, default=1)
    bench.add_argument(
        "--fn",
        action="append",
        help="fixture name or rule file (repeatable; default: all fixtures)",
    )
    bench.add_argument("--sweep", metavar="KEY=V1,V2,...")
    _add_param_options(bench)
    bench.add_argument(
        "--wall-clock-limit", type=float, default=None, metavar="SECONDS"
    )
    bench.set_defaults(handler=cmd_bench)

    report = subs.add_parser(
        "report", help="render a bench CSV into summaries and figures"
    )
    report.add_argument("csv")
    report.add_argument("-o", "--output", required=True, metavar="DIR")
    report.set_defaults(handler=cmd_report)

    fixtures = subs.add_parser("fixtures", help="list bundled rule files")
    fixtures.add_argument("--path", metavar="NAME", help="print one path")
    fixtures.set_defaults(handler=cmd_fixtures)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
