"""Verdicts over runs: convergence, intention, interleaving, fuzzing.

The convergence oracle replays every schedule of a scenario and compares
finals.  The intention oracle checks that each op's local effect survives:
every inserted character that is never deleted appears exactly once, every
deleted character is gone, and the characters that surrounded an insert on
its home replica keep their relative order around it at every final.  The
interleave check flags multi-character insert runs that ended up split by
concurrent material.  All checks require scenario characters to be unique
so character identity is observable from plain strings.
"""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field

from .core import Ordering, VersionVector, causal_compare
from .harness import Report, enumerate_schedules, run_scenario
from .logoot import DEFAULT_BASE
from .scenario import Action, DeliverySpec, LogootSpec, Scenario, ScenarioInvalid


@dataclass
class OracleVerdict:
    passed: bool
    schedules: int
    witness: dict | None = None        # two schedules with different finals
    failing_runs: list = field(default_factory=list)  # cross-site divergence or errors

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "schedules": self.schedules,
            "witness": self.witness,
            "failing_runs": self.failing_runs,
        }


def fatal_errors(report: Report) -> list:
    """Errors that invalidate a run (delivery failures, stalls).  Generation
    errors merely truncate one site's script and are judged separately."""
    return [e for e in report.errors if not e["where"].startswith("generate@")]


def convergence_oracle(scenario: Scenario, max_schedules: int = 200_000) -> OracleVerdict:
    """Run every schedule and judge convergence.

    Every run must agree across its own replicas.  Engines whose contract is
    delivery-order independence (the identifier-based ones and the
    causal-broadcast transformation lane) must additionally produce the same
    outcome on every schedule; the total-order lanes are exempt from the
    cross-schedule comparison, since their result is legitimately a function
    of the sequence the ops were assigned (e.g. which insert wins a tie).
    """
    from .scenario import SEQUENCED_ENGINES

    order_free = scenario.engine not in SEQUENCED_ENGINES
    first: tuple | None = None
    first_trace = None
    verdict = OracleVerdict(passed=True, schedules=0)
    for trace, sim in enumerate_schedules(scenario, max_schedules):
        verdict.schedules += 1
        report = sim.report()
        outcome = (tuple(sorted(report.finals.items())), tuple(sorted(report.digests.items())))
        if not report.converged or fatal_errors(report) or not report.delivery_counts_ok:
            verdict.passed = False
            verdict.failing_runs.append(
                {"schedule": trace, "finals": report.finals, "errors": report.errors}
            )
        if first is None:
            first = outcome
            first_trace = trace
        elif order_free and outcome != first and verdict.witness is None:
            verdict.passed = False
            verdict.witness = {
                "schedule_a": first_trace,
                "schedule_b": trace,
                "finals_a": dict(first[0]),
                "finals_b": report.finals,
            }
    return verdict


def _char_instances(scenario: Scenario, report: Report) -> tuple[list, list, list]:
    """Base chars, inserted-op records, removed chars; requires unique chars."""
    base = list(scenario.base_doc)
    inserted = []
    removed = []
    for entry in report.gen_log:
        if entry["kind"] == "insert":
            state = entry["state_before"]
            pos = entry["pos"]
            text = entry.get("text", "")
            for i, op in enumerate(entry["ops"]):
                ch = op["ch"]
                before = state[:pos] + text[:i]
                after = state[pos:]
                inserted.append(
                    {
                        "site": entry["site"],
                        "ch": ch,
                        "before": before,
                        "after": after,
                        "vv": op["vv"],
                    }
                )
        else:
            for op in entry["ops"]:
                removed.append(op["removed"])
    everything = base + [rec["ch"] for rec in inserted]
    if len(set(everything)) != len(everything):
        raise ScenarioInvalid("intention/interleave oracles need unique characters")
    return base, inserted, removed


def intention_oracle(report: Report, scenario: Scenario) -> list[str]:
    """Local-effect preservation violations across all final states."""
    base, inserted, removed = _char_instances(scenario, report)
    survivors = sorted((set(base) | {r["ch"] for r in inserted}) - set(removed))
    violations = []
    for site, final in sorted(report.finals.items()):
        if sorted(final) != survivors:
            violations.append(
                f"site {site}: final {final!r} does not hold exactly the surviving "
                f"characters {''.join(survivors)!r}"
            )
        for rec in inserted:
            ch = rec["ch"]
            if ch not in final:
                continue
            at = final.index(ch)
            for b in rec["before"]:
                if b in final and final.index(b) >= at:
                    violations.append(
                        f"site {site}: {b!r} should precede {ch!r} "
                        f"(insert context at site {rec['site']}) but final is {final!r}"
                    )
            for a in rec["after"]:
                if a in final and final.index(a) <= at:
                    violations.append(
                        f"site {site}: {a!r} should follow {ch!r} "
                        f"(insert context at site {rec['site']}) but final is {final!r}"
                    )
    return violations


def interleave_check(report: Report, scenario: Scenario) -> list[str]:
    """Flag insert runs whose characters got split by concurrent material."""
    _, inserted, _ = _char_instances(scenario, report)
    by_ch = {rec["ch"]: rec for rec in inserted}
    flags = []
    for site, action_idx, text in scenario.insert_runs():
        run_vvs = []
        for ch in text:
            rec = by_ch.get(ch)
            if rec is None or rec["site"] != site:
                run_vvs = None
                break
            run_vvs.append(VersionVector.from_json(rec["vv"]))
        if not run_vvs:
            continue
        for dest, final in sorted(report.finals.items()):
            positions = [final.index(ch) for ch in text if ch in final]
            if len(positions) < 2:
                continue
            contiguous = all(b == a + 1 for a, b in zip(positions, positions[1:]))
            if contiguous:
                continue
            lo, hi = min(positions), max(positions)
            inside = [final[i] for i in range(lo, hi + 1) if final[i] not in text]
            targeted_inside = False
            for ch in inside:
                rec = by_ch.get(ch)
                if rec is None:
                    continue  # base characters cannot be deliberate targets
                vv = VersionVector.from_json(rec["vv"])
                if any(
                    causal_compare(vv, run_vv) is not Ordering.CONCURRENT
                    for run_vv in run_vvs
                ):
                    targeted_inside = True
                    break
            if not targeted_inside:
                flags.append(
                    f"site {dest}: run {text!r} from site {site} (action {action_idx}) "
                    f"is interleaved in {final!r}"
                )
    return flags


def analyze(report: Report, scenario: Scenario) -> Report:
    """Attach intention and interleaving findings to a report."""
    report.intention_violations = intention_oracle(report, scenario)
    report.interleaving_flags = interleave_check(report, scenario)
    return report


def linear_extensions(items: list, precedes) -> list[tuple]:
    """All orderings of ``items`` consistent with the partial order
    ``precedes(a, b)``; brute force, for cross-checking schedule counts."""
    out = []
    for perm in itertools.permutations(items):
        ok = True
        for i, a in enumerate(perm):
            for b in perm[i + 1 :]:
                if precedes(b, a):
                    ok = False
                    break
            if not ok:
                break
        if ok:
            out.append(perm)
    return out


# -- fuzzing ---------------------------------------------------------------------

_BASE_ALPHABET = "ABCDEFGH"


def _fresh_chars(n: int) -> list[str]:
    chars = []
    for k in range(n):
        if k < 26:
            chars.append(chr(ord("a") + k))
        else:
            chars.append(chr(0x3B1 + k - 26))  # greek letters and onward
    return chars


def random_scenario(
    seed: int,
    engine: str,
    max_sites: int = 4,
    max_ops: int = 8,
    multi_char_runs: bool = True,
) -> Scenario:
    """Deterministic random barrier-free scenario with unique characters."""
    rng = random.Random(seed)
    n_sites = rng.randint(2, max_sites)
    sites = list(range(1, n_sites + 1))
    base_len = rng.randint(0, min(4, len(_BASE_ALPHABET)))
    base = _BASE_ALPHABET[:base_len]
    total_ops = rng.randint(2, max_ops)
    supply = _fresh_chars(max_ops)
    script: dict[int, list[Action]] = {s: [] for s in sites}
    lengths = {s: base_len for s in sites}
    used = 0
    while used < total_ops:
        site = rng.choice(sites)
        room = total_ops - used
        if lengths[site] > 0 and rng.random() < 0.4:
            script[site].append(Action("delete", pos=rng.randrange(lengths[site])))
            lengths[site] -= 1
            used += 1
        else:
            run = rng.randint(2, min(3, room)) if multi_char_runs and room >= 2 and rng.random() < 0.25 else 1
            text = "".join(supply[used : used + run])
            script[site].append(Action("insert", pos=rng.randint(0, lengths[site]), text=text))
            lengths[site] += run
            used += run
    scenario = Scenario(
        engine=engine,
        base_doc=base,
        sites=sites,
        script=script,
        delivery=DeliverySpec(mode="seeded", seed=seed),
        logoot=LogootSpec(base=DEFAULT_BASE),
        cap=max_ops,
        name=f"fuzz-{engine}-{seed}",
    )
    for s in sites:
        scenario.rng[s] = _seeded_rng(seed, s)
    scenario.validate()
    return scenario


def _seeded_rng(seed: int, site: int):
    from .logoot import RngScript

    return RngScript("seeded", seed=seed * 1_000_003 + site)


@dataclass
class FuzzFailure:
    scenario: dict
    report: dict
    shrunk: dict | None

    def to_json(self) -> dict:
        return {"scenario": self.scenario, "report": self.report, "shrunk": self.shrunk}


@dataclass
class FuzzResult:
    engine: str
    iterations: int
    seed: int
    failures: list[FuzzFailure] = field(default_factory=list)
    causal_violations: int = 0
    delivery_count_errors: int = 0

    @property
    def passed(self) -> bool:
        return (
            not self.failures
            and self.causal_violations == 0
            and self.delivery_count_errors == 0
        )

    def to_json(self) -> dict:
        return {
            "engine": self.engine,
            "iterations": self.iterations,
            "seed": self.seed,
            "passed": self.passed,
            "failures": [f.to_json() for f in self.failures],
            "causal_violations": self.causal_violations,
            "delivery_count_errors": self.delivery_count_errors,
        }


def _run_fails(scenario: Scenario) -> Report | None:
    report = run_scenario(scenario)
    if report.converged and not fatal_errors(report) and report.delivery_counts_ok:
        return None
    return report


def shrink_scenario(scenario: Scenario) -> Scenario:
    """Greedy minimization: keep any reduction that still fails."""
    current = scenario
    changed = True
    while changed:
        changed = False
        for candidate in _reductions(current):
            try:
                candidate.validate()
            except ScenarioInvalid:
                continue
            if _run_fails(candidate) is not None:
                current = candidate
                changed = True
                break
    return current


def _reductions(scenario: Scenario):
    for site in scenario.sites:
        if len(scenario.sites) > 2:
            survivors = [s for s in scenario.sites if s != site]
            yield _rebuild(scenario, survivors, {s: scenario.script.get(s, []) for s in survivors})
    for site in scenario.sites:
        actions = scenario.script.get(site, [])
        if actions:
            trimmed = dict(scenario.script)
            trimmed[site] = actions[:-1]
            yield _rebuild(scenario, scenario.sites, trimmed)
    for site in scenario.sites:
        actions = scenario.script.get(site, [])
        for idx, action in enumerate(actions):
            if action.kind == "insert" and len(action.text) > 1:
                trimmed = dict(scenario.script)
                trimmed[site] = (
                    actions[:idx]
                    + [Action("insert", pos=action.pos, text=action.text[:-1])]
                    + actions[idx + 1 :]
                )
                yield _rebuild(scenario, scenario.sites, trimmed)
    if scenario.base_doc:
        smaller = _rebuild(scenario, scenario.sites, scenario.script)
        smaller.base_doc = scenario.base_doc[:-1]
        yield smaller


def _rebuild(scenario: Scenario, sites, script) -> Scenario:
    out = scenario.with_engine(scenario.engine)
    out.sites = list(sites)
    out.script = {s: list(a) for s, a in script.items() if s in sites}
    return out


def fuzz_convergence(engine: str, iterations: int, seed: int = 0, max_sites: int = 4, max_ops: int = 8) -> FuzzResult:
    """Seeded random scenarios, one seeded schedule each; failures shrink."""
    result = FuzzResult(engine=engine, iterations=iterations, seed=seed)
    for k in range(iterations):
        scenario = random_scenario(seed + k, engine, max_sites, max_ops)
        report = run_scenario(scenario)
        result.causal_violations += report.causal_violations
        if not report.delivery_counts_ok:
            result.delivery_count_errors += 1
        if not report.converged or fatal_errors(report):
            shrunk = shrink_scenario(scenario)
            result.failures.append(
                FuzzFailure(
                    scenario=scenario.to_json(),
                    report=report.to_json(),
                    shrunk=shrunk.to_json(),
                )
            )
    return result


# -- divergence search for the unsound transformation lane -----------------------


def search_divergence(
    bases: tuple[str, ...] = ("abc", "abcd"),
    max_schedules: int = 5000,
) -> dict | None:
    """Exhaustively search small 3-site sessions for a script on which the
    arbitrary-order transformation lane diverges while the sequenced lane
    converges on every schedule.  Returns the first witness found."""
    site_chars = {1: "x", 2: "y", 3: "z"}
    for base in bases:
        length = len(base)
        candidates: dict[int, list[Action]] = {}
        for site in (1, 2, 3):
            opts = []
            for pos in range(min(length, 3)):
                opts.append(Action("delete", pos=pos))
            for pos in range(min(length + 1, 4)):
                opts.append(Action("insert", pos=pos, text=site_chars[site]))
            candidates[site] = opts
        for combo in itertools.product(candidates[1], candidates[2], candidates[3]):
            for barrier_site in (3, 2, 1, None):
                script = {}
                for site, action in zip((1, 2, 3), combo):
                    actions = [action]
                    if site == barrier_site:
                        actions = [Action("barrier", count=1), action]
                    script[site] = actions
                scenario = Scenario(
                    engine="ot-arbitrary",
                    base_doc=base,
                    sites=[1, 2, 3],
                    script=script,
                    delivery=DeliverySpec(mode="enumerate"),
                    name="dopt-search",
                )
                witness = _check_divergence(scenario, max_schedules)
                if witness is not None:
                    return witness
    return None


def _check_divergence(scenario: Scenario, max_schedules: int) -> dict | None:
    first = None
    first_trace = None
    divergent = None
    try:
        for trace, sim in enumerate_schedules(scenario, max_schedules):
            report = sim.report()
            if report.errors:
                return None  # positions stop being valid on some schedule: skip
            outcome = tuple(sorted(report.finals.items()))
            if not report.converged:
                divergent = {"schedule": trace, "finals": report.finals}
                break
            if first is None:
                first, first_trace = outcome, trace
            elif outcome != first:
                divergent = {
                    "schedule_a": first_trace,
                    "schedule_b": trace,
                    "finals_a": dict(first),
                    "finals_b": report.finals,
                }
                break
    except Exception:
        return None
    if divergent is None:
        return None
    sequenced = convergence_oracle(scenario.with_engine("ot-seq"), max_schedules)
    if not sequenced.passed:
        return None
    return {
        "scenario": scenario.to_json(),
        "arbitrary_divergence": divergent,
        "sequenced_schedules": sequenced.schedules,
    }
