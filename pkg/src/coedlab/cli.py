"""Command-line front door: run scenarios, replay named reproductions,
fuzz engines, check oracles, and benchmark.

Exit codes: 0 when the command's expectation holds (including reproductions
whose documented flaw manifests exactly -- those print EXPECTED-FAIL), 1 on
an oracle failure or anomaly flag, 2 on usage errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .bench import BenchConfig, bench_space, bench_time, records_jsonl, render_records
from .harness import run_scenario
from .oracles import analyze, convergence_oracle, fatal_errors, fuzz_convergence
from .repro import REPRO_NAMES, run_repro
from .scenario import ENGINES, Scenario, ScenarioInvalid, TooLarge

USAGE_ERROR = 2


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coedlab",
        description="replicated-text consistency laboratory",
    )
    parser.add_argument("--format", choices=("text", "json"), default="text")
    parser.add_argument("--seed", type=int, default=None, help="override run seed")
    parser.add_argument("--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=f"coedlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario file")
    p_run.add_argument("file")
    p_run.add_argument("--engine", choices=ENGINES, default=None, help="engine override")
    p_run.add_argument("--schedule-seed", type=int, default=None)

    p_repro = sub.add_parser("repro", help="replay a named reproduction")
    p_repro.add_argument("name", choices=sorted(REPRO_NAMES))

    p_fuzz = sub.add_parser("fuzz", help="seeded random convergence fuzzing")
    p_fuzz.add_argument("--engine", choices=ENGINES, default="ot-seq")
    p_fuzz.add_argument("--sites", type=int, default=4)
    p_fuzz.add_argument("--ops", type=int, default=8)
    p_fuzz.add_argument("--iterations", type=int, default=100)
    p_fuzz.add_argument("--seed", type=int, default=0)

    p_oracle = sub.add_parser("oracle", help="exhaustive convergence check of a scenario file")
    p_oracle.add_argument("file")

    p_bench = sub.add_parser("bench", help="operation-count benchmarks from a config file")
    p_bench.add_argument("config")
    return parser


def _load_scenario(path: str) -> Scenario:
    if not Path(path).exists():
        raise ScenarioInvalid(f"no such scenario file: {path}")
    return Scenario.load(path)


def _emit(args, text_lines: list[str], payload: dict) -> None:
    if args.format == "json":
        print(json.dumps(payload, sort_keys=True))
    else:
        for line in text_lines:
            print(line)


def cmd_run(args) -> int:
    scenario = _load_scenario(args.file)
    if args.engine:
        scenario = scenario.with_engine(args.engine)
    seed = args.schedule_seed if args.schedule_seed is not None else args.seed
    report = run_scenario(scenario, seed=seed)
    try:
        analyze(report, scenario)
    except ScenarioInvalid:
        pass  # duplicate characters: state checks still stand on their own
    ok = (
        report.converged
        and not fatal_errors(report)
        and report.delivery_counts_ok
        and not report.intention_violations
        and not report.interleaving_flags
        and report.causal_violations == 0
    )
    lines = [
        f"engine {report.engine}  scenario {report.name or args.file}",
        f"finals: {report.finals}",
        f"converged: {report.converged}",
    ]
    if report.errors:
        lines.append(f"errors: {report.errors}")
    if report.intention_violations:
        lines.append(f"intention violations: {report.intention_violations}")
    if report.interleaving_flags:
        lines.append(f"interleaving flags: {report.interleaving_flags}")
    lines.append("RESULT: " + ("pass" if ok else "fail"))
    if args.verbose:
        lines.insert(1, f"schedule: {report.schedule}")
    _emit(args, lines, report.to_json())
    return 0 if ok else 1


def cmd_repro(args) -> int:
    outcome = run_repro(args.name)
    lines = [f"{outcome.name}: {outcome.status}"] + ["  " + l for l in outcome.lines]
    _emit(args, lines, outcome.to_json())
    return 0 if outcome.ok else 1


def cmd_fuzz(args) -> int:
    result = fuzz_convergence(
        args.engine, args.iterations, seed=args.seed, max_sites=args.sites, max_ops=args.ops
    )
    lines = [
        f"engine {result.engine}: {result.iterations} scenarios, "
        f"{len(result.failures)} failures, {result.causal_violations} causal violations",
    ]
    for failure in result.failures[:3]:
        lines.append(f"  minimal witness: {json.dumps(failure.shrunk, sort_keys=True)}")
    lines.append("RESULT: " + ("pass" if result.passed else "fail"))
    _emit(args, lines, result.to_json())
    return 0 if result.passed else 1


def cmd_oracle(args) -> int:
    scenario = _load_scenario(args.file)
    verdict = convergence_oracle(scenario)
    lines = [
        f"engine {scenario.engine}  scenario {scenario.name or args.file}",
        f"schedules enumerated: {verdict.schedules}",
        f"converged everywhere: {verdict.passed}",
    ]
    if verdict.witness:
        lines.append(f"witness: {json.dumps(verdict.witness, sort_keys=True)}")
    for failing in verdict.failing_runs[:3]:
        lines.append(f"divergent run finals: {failing['finals']}")
    lines.append("RESULT: " + ("pass" if verdict.passed else "fail"))
    _emit(args, lines, verdict.to_json())
    return 0 if verdict.passed else 1


def cmd_bench(args) -> int:
    path = Path(args.config)
    if not path.exists():
        raise ScenarioInvalid(f"no such bench config: {args.config}")
    data = json.loads(path.read_text())
    cfg = BenchConfig.from_json(data)
    if args.seed is not None:
        cfg.seed = args.seed
    records = bench_time(cfg) if data.get("time", True) else []
    space = bench_space(cfg, data["space_trace"]) if "space_trace" in data else None
    if args.format == "json":
        out = records_jsonl(records)
        if space is not None:
            out += ("\n" if out else "") + json.dumps(space.to_json(), sort_keys=True)
        print(out)
    else:
        if records:
            print(render_records(records))
        if space is not None:
            print(f"space: {json.dumps(space.to_json(), sort_keys=True)}")
    return 0


_COMMANDS = {
    "run": cmd_run,
    "repro": cmd_repro,
    "fuzz": cmd_fuzz,
    "oracle": cmd_oracle,
    "bench": cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ScenarioInvalid, TooLarge, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
