"""Named reproductions of the classic consistency puzzles.

Each entry pairs a canonical scenario (shipped as JSON next to this module)
with an expectation checker.  A reproduction that demonstrates a documented
flaw *succeeds* when the flaw manifests exactly as documented; its status
is EXPECTED-FAIL and the process exit code is 0.  PASS marks the sound
engines doing the right thing; FAIL means the expectation did not hold.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .core import ExternalOp
from .harness import enumerate_schedules, run_scenario
from .logoot import LogootId, RngScript, construct_ids, OrderingViolation
from .oracles import analyze, convergence_oracle, search_divergence
from .ot import check_cp2, cp2_tie_signature
from .scenario import Action, DeliverySpec, LogootSpec, Scenario

REPRO_NAMES = (
    "fig1-ot",
    "fig1-woot",
    "dopt",
    "ft",
    "logoot-interleave",
    "logoot-infloop",
    "logoot-order-violation",
    "serialization-strawman",
)

# the identifier quartet of the scripted two-site interleaving session
FIG2_INIT_IDS = [LogootId.from_json([[1, 1, 1]]), LogootId.from_json([[3, 1, 2]])]
FIG2_LEFT = LogootId.from_json([[2, 1, 4], [8, 1, 4]])
FIG2_RIGHT = LogootId.from_json([[2, 2, 2], [0, 2, 2]])
FIG2_PATCHED_C = "<2,1,4><8,1,4><9,1,5>"
FIG2_PATCHED_D = "<2,1,4><0,2,2><4,1,6>"


@dataclass
class ReproOutcome:
    name: str
    status: str  # "PASS" | "EXPECTED-FAIL" | "FAIL"
    lines: list
    data: dict

    @property
    def ok(self) -> bool:
        return self.status in ("PASS", "EXPECTED-FAIL")

    def to_json(self) -> dict:
        return {"name": self.name, "status": self.status, "lines": self.lines, "data": self.data}


def build_fig1(engine: str) -> Scenario:
    return Scenario(
        engine=engine,
        base_doc="abe",
        sites=[1, 2],
        script={
            1: [Action("delete", pos=1)],
            2: [Action("insert", pos=2, text="c")],
        },
        delivery=DeliverySpec(mode="enumerate"),
        name=f"fig1-{engine}",
    )


def build_fig2(engine: str, extended: bool = True) -> Scenario:
    script_1: list[Action] = [Action("insert", pos=1, text="ab")]
    rng_1 = [19, 28]
    if extended:
        script_1 += [Action("barrier", count=2), Action("insert", pos=4, text="cd")]
        rng_1 += [289, 204]
    return Scenario(
        engine=engine,
        base_doc="XY",
        sites=[1, 2],
        script={1: script_1, 2: [Action("insert", pos=1, text="AB")]},
        rng={1: RngScript("scripted", rng_1), 2: RngScript("scripted", [19, 20])},
        delivery=DeliverySpec(mode="enumerate" if not extended else "seeded", seed=0),
        logoot=LogootSpec(base=10, init_ids=FIG2_INIT_IDS, init_counters={1: 2}),
        name=f"fig2-{engine}" + ("-extended" if extended else ""),
    )


def build_dopt() -> Scenario:
    """Witness found by ``search_divergence``: three concurrent deletes where
    the context-free lane falsely ties deletes from different contexts."""
    return Scenario(
        engine="ot-arbitrary",
        base_doc="abc",
        sites=[1, 2, 3],
        script={
            1: [Action("delete", pos=0)],
            2: [Action("delete", pos=0)],
            3: [Action("barrier", count=1), Action("delete", pos=0)],
        },
        delivery=DeliverySpec(mode="enumerate"),
        name="dopt-witness",
    )


def build_serialization_strawman() -> Scenario:
    scenario = build_fig1("serialization")
    scenario.name = "serialization-strawman"
    return scenario


def build_ft() -> Scenario:
    """The false-tie triple as a three-site session: a concurrent delete
    shifts one insert onto the other's position, a tie no user created."""
    return Scenario(
        engine="ot-arbitrary",
        base_doc="ab",
        sites=[1, 2, 3],
        script={
            1: [Action("insert", pos=2, text="x")],
            2: [Action("delete", pos=1)],
            3: [Action("insert", pos=1, text="y")],
        },
        delivery=DeliverySpec(mode="enumerate"),
        name="ft-witness",
    )


_BUILDERS = {
    "fig1-ot": lambda: build_fig1("ot-seq"),
    "fig1-woot": lambda: build_fig1("woot"),
    "dopt": build_dopt,
    "ft": build_ft,
    "logoot-interleave": lambda: build_fig2("logoot-strict", extended=False),
    "logoot-infloop": lambda: build_fig2("logoot-strict", extended=True),
    "logoot-order-violation": lambda: build_fig2("logoot-patched", extended=True),
    "serialization-strawman": build_serialization_strawman,
}


def scenario_path(name: str) -> Path:
    return Path(str(resources.files("coedlab") / "scenarios" / f"{name}.json"))


def load_repro_scenario(name: str) -> Scenario:
    """Canonical scenario from the shipped file, built fresh if absent."""
    path = scenario_path(name)
    if path.exists():
        return Scenario.load(path)
    return _BUILDERS[name]()


def write_scenarios(directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for name, builder in _BUILDERS.items():
        scenario = builder()
        scenario.name = name
        scenario.dump(directory / f"{name}.json")


# -- checkers ------------------------------------------------------------------


def _fig1_outcome(name: str, want_digests: bool) -> ReproOutcome:
    scenario = load_repro_scenario(name)
    lines = []
    ok = True
    applied_ok = True
    for trace, sim in enumerate_schedules(scenario):
        report = sim.report()
        if not report.converged or set(report.finals.values()) != {"ace"}:
            ok = False
        got = [
            ExternalOp.from_json(entry["op"])
            for entry in report.applied
            if entry["dest"] == 1 and entry["origin"] == 2
        ]
        if got != [ExternalOp.insert(1, "c")]:
            applied_ok = False
        if want_digests and len(set(report.digests.values())) != 1:
            ok = False
    lines.append(f"both sites converge to 'ace': {'yes' if ok else 'NO'}")
    lines.append(f"site 1 applies exactly I(1,'c'): {'yes' if applied_ok else 'NO'}")
    status = "PASS" if ok and applied_ok else "FAIL"
    return ReproOutcome(name, status, lines, {"finals": {"1": "ace", "2": "ace"}})


def repro_fig1_ot() -> ReproOutcome:
    return _fig1_outcome("fig1-ot", want_digests=False)


def repro_fig1_woot() -> ReproOutcome:
    return _fig1_outcome("fig1-woot", want_digests=True)


def repro_dopt() -> ReproOutcome:
    scenario = load_repro_scenario("dopt")
    arb = convergence_oracle(scenario)
    seq = convergence_oracle(scenario.with_engine("ot-seq"))
    lines = [
        f"arbitrary-order transforms diverge on some schedule: {'yes' if not arb.passed else 'NO'}",
        f"sequenced lane converges on all {seq.schedules} schedules: {'yes' if seq.passed else 'NO'}",
    ]
    flawed = not arb.passed and seq.passed
    if arb.failing_runs:
        lines.append(f"divergent finals: {arb.failing_runs[0]['finals']}")
    elif arb.witness:
        lines.append(f"divergent finals: {arb.witness['finals_a']} vs {arb.witness['finals_b']}")
    status = "EXPECTED-FAIL" if flawed else "FAIL"
    return ReproOutcome(
        "dopt",
        status,
        lines,
        {"arbitrary": arb.to_json() if not arb.passed else {}, "sequenced_schedules": seq.schedules},
    )


def repro_ft() -> ReproOutcome:
    """Canonical transformed-insert tie: a delete shifts one insert onto the
    other, and the two transformation paths disagree."""
    ds = "ab"
    a = ExternalOp.insert(2, "x")
    b = ExternalOp.delete(1)
    c = ExternalOp.insert(1, "y")
    counter = check_cp2(a, b, c, ds)
    signature = cp2_tie_signature(a, b, c)
    lines = [
        f"ops on {ds!r}: a={a} (site 1), b={b} (site 2), c={c} (site 3)",
        f"transformation-order property violated: {'yes' if counter else 'NO'}",
    ]
    if counter:
        lines.append(f"path b-then-c' gives {counter[0]}, path c-then-b' gives {counter[1]}")
    lines.append(f"violation is an insert-insert transformed-position tie: {'yes' if signature else 'NO'}")
    scenario = load_repro_scenario("ft")
    arb = convergence_oracle(scenario)
    seq = convergence_oracle(scenario.with_engine("ot-seq"))
    lines.append(
        "as a session: arbitrary-order transforms diverge "
        f"({'yes' if not arb.passed else 'NO'}), sequenced lane converges "
        f"({'yes' if seq.passed else 'NO'})"
    )
    status = "EXPECTED-FAIL" if counter and signature and not arb.passed and seq.passed else "FAIL"
    return ReproOutcome(
        "ft",
        status,
        lines,
        {"divergent": [str(counter[0]), str(counter[1])] if counter else None},
    )


def repro_logoot_interleave() -> ReproOutcome:
    scenario = load_repro_scenario("logoot-interleave")
    verdict = convergence_oracle(scenario)
    # one representative run for the anomaly flags
    report = analyze(run_scenario(scenario, schedule=None, seed=0), scenario)
    finals_ok = verdict.passed and set(report.finals.values()) == {"XaAbBY"}
    flagged = bool(report.interleaving_flags)
    lines = [
        f"all schedules converge to 'XaAbBY': {'yes' if finals_ok else 'NO'}",
        f"concurrent runs are interleaved (flagged): {'yes' if flagged else 'NO'}",
    ]
    status = "EXPECTED-FAIL" if finals_ok and flagged else "FAIL"
    return ReproOutcome(
        "logoot-interleave",
        status,
        lines,
        {"finals": report.finals, "flags": report.interleaving_flags},
    )


def repro_logoot_infloop() -> ReproOutcome:
    scenario = load_repro_scenario("logoot-infloop")
    report = run_scenario(scenario)
    err = next((e for e in report.errors if e["error"] == "OrderingViolation"), None)
    pair_ok = err is not None and str(FIG2_LEFT) in err["detail"] and str(FIG2_RIGHT) in err["detail"]
    lines = [
        "allocation between "
        f"{FIG2_LEFT} and {FIG2_RIGHT} detected as non-terminating: {'yes' if pair_ok else 'NO'}",
        f"replicas still agree on everything generated: {'yes' if report.converged else 'NO'}",
    ]
    # the same pair, called directly, must raise rather than hang
    try:
        construct_ids(FIG2_LEFT, FIG2_RIGHT, 2, 1, RngScript("seeded", seed=1), base=10, mode="strict")
        direct = False
    except OrderingViolation:
        direct = True
    lines.append(f"direct allocation raises OrderingViolation: {'yes' if direct else 'NO'}")
    status = "EXPECTED-FAIL" if pair_ok and direct and report.converged else "FAIL"
    return ReproOutcome("logoot-infloop", status, lines, {"error": err})


def repro_logoot_order_violation() -> ReproOutcome:
    scenario = load_repro_scenario("logoot-order-violation")
    report = run_scenario(scenario)
    ids = [
        op.get("id")
        for entry in report.gen_log
        if entry["site"] == 1 and entry.get("action") == 2
        for op in entry["ops"]
    ]
    ids_ok = ids == [FIG2_PATCHED_C, FIG2_PATCHED_D]
    diverged = not report.converged
    lines = [
        f"patched allocator emits {FIG2_PATCHED_C} and {FIG2_PATCHED_D}: {'yes' if ids_ok else 'NO: ' + repr(ids)}",
        f"replica states diverge: {'yes' if diverged else 'NO'} {report.finals}",
        f"entry order stopped matching identifier order: "
        f"{'yes' if report.sorted_violations else 'NO'}",
    ]
    status = "EXPECTED-FAIL" if ids_ok and diverged and report.sorted_violations else "FAIL"
    return ReproOutcome(
        "logoot-order-violation",
        status,
        lines,
        {"ids": ids, "finals": report.finals, "sorted_violations": report.sorted_violations},
    )


def repro_serialization_strawman() -> ReproOutcome:
    scenario = load_repro_scenario("serialization-strawman")
    verdict = convergence_oracle(scenario)
    report = analyze(run_scenario(scenario, schedule=None, seed=0), scenario)
    finals = set(report.finals.values())
    mismatch = finals == {"aec", "ace"}
    lines = [
        f"untransformed replay yields 'aec' against 'ace': {'yes' if mismatch else 'NO: ' + repr(finals)}",
        f"local effect of the insert is violated: {'yes' if report.intention_violations else 'NO'}",
    ]
    status = "EXPECTED-FAIL" if mismatch and report.intention_violations else "FAIL"
    return ReproOutcome(
        "serialization-strawman",
        status,
        lines,
        {"finals": report.finals, "intention_violations": report.intention_violations},
    )


_CHECKERS = {
    "fig1-ot": repro_fig1_ot,
    "fig1-woot": repro_fig1_woot,
    "dopt": repro_dopt,
    "ft": repro_ft,
    "logoot-interleave": repro_logoot_interleave,
    "logoot-infloop": repro_logoot_infloop,
    "logoot-order-violation": repro_logoot_order_violation,
    "serialization-strawman": repro_serialization_strawman,
}


def run_repro(name: str) -> ReproOutcome:
    if name not in _CHECKERS:
        raise KeyError(f"unknown reproduction {name!r}; known: {', '.join(REPRO_NAMES)}")
    return _CHECKERS[name]()
