"""Deterministic multi-site simulator with schedule control.

A run drives every scripted site to completion and delivers every generated
operation everywhere exactly once.  Sites generate as early as their
barriers allow; the degrees of freedom of a run -- the schedule -- are the
interleavings of delivery events (and, for sequenced engines, the order in
which the sequencer accepts submissions).  Identical (scenario, schedule)
pairs produce identical reports.

Delivery conditions: engines on the causal lane release an op only when it
is causally ready at the destination; the identifier-based tombstone engine
can instead run on precondition-deferral alone (``delivery.causal: false``),
in which case causal violations are measured and reported rather than
prevented.
"""
from __future__ import annotations

import hashlib
import json
import random
from collections import deque
from dataclasses import dataclass, field, replace

from .core import (
    Engine,
    OutOfBounds,
    SiteId,
    VersionVector,
    WireOp,
    causally_ready,
)
from .logoot import LogootSite, OrderingViolation, RngScript, ScriptExhausted, ScriptOutOfRange
from .ot import GapInSequence, NotOwnHead, OtArbitrarySite, OtSequencerSite, SerializationSite
from .scenario import SEQUENCED_ENGINES, Action, Scenario, ScenarioInvalid, TooLarge
from .woot import PreconditionViolated, WootSite

GENERATION_ERRORS = (
    OrderingViolation,
    OutOfBounds,
    ScriptExhausted,
    ScriptOutOfRange,
)
DELIVERY_ERRORS = (
    OutOfBounds,
    GapInSequence,
    NotOwnHead,
    PreconditionViolated,
)


def build_engine(scenario: Scenario, site: SiteId) -> Engine:
    name = scenario.engine
    if name == "ot-seq":
        return OtSequencerSite(site, scenario.base_doc)
    if name == "ot-arbitrary":
        return OtArbitrarySite(site, scenario.base_doc)
    if name == "serialization":
        return SerializationSite(site, scenario.base_doc)
    if name == "woot":
        return WootSite(site, scenario.base_doc)
    if name in ("logoot-strict", "logoot-patched"):
        spec = scenario.logoot
        rng = scenario.rng.get(site)
        return LogootSite(
            site,
            scenario.base_doc,
            base=spec.base,
            mode="patched" if name == "logoot-patched" else "strict",
            rng=rng.clone() if rng else RngScript("seeded", seed=site * 7919),
            init_ids=spec.init_ids,
            init_seq=spec.init_counters.get(site, 0),
        )
    raise ScenarioInvalid(f"unknown engine {name!r}")


@dataclass
class Report:
    """Everything a run produced, in JSON-native form."""

    engine: str = ""
    name: str = ""
    schedule: list = field(default_factory=list)
    seed: int | None = None
    finals: dict = field(default_factory=dict)           # site(str) -> text
    digests: dict = field(default_factory=dict)          # site(str) -> internal digest hash
    converged: bool = False
    errors: list = field(default_factory=list)
    causal_violations: int = 0
    sorted_violations: list = field(default_factory=list)
    delivery_counts_ok: bool = True
    applied: list = field(default_factory=list)
    gen_log: list = field(default_factory=list)
    costs: dict = field(default_factory=dict)
    intention_violations: list = field(default_factory=list)
    interleaving_flags: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "engine": self.engine,
            "name": self.name,
            "schedule": self.schedule,
            "seed": self.seed,
            "finals": self.finals,
            "digests": self.digests,
            "converged": self.converged,
            "errors": self.errors,
            "causal_violations": self.causal_violations,
            "sorted_violations": self.sorted_violations,
            "delivery_counts_ok": self.delivery_counts_ok,
            "applied": self.applied,
            "gen_log": self.gen_log,
            "costs": self.costs,
            "intention_violations": self.intention_violations,
            "interleaving_flags": self.interleaving_flags,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Report":
        return cls(**data)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _digest(value) -> str:
    return hashlib.sha256(repr(value).encode()).hexdigest()[:16]


class _SiteRun:
    __slots__ = ("engine", "actions", "cursor", "delivered_remote", "stopped")

    def __init__(self, engine: Engine, actions: list[Action]):
        self.engine = engine
        self.actions = actions
        self.cursor = 0
        self.delivered_remote = 0
        self.stopped = False

    def clone(self) -> "_SiteRun":
        other = _SiteRun(self.engine.clone(), self.actions)
        other.cursor = self.cursor
        other.delivered_remote = self.delivered_remote
        other.stopped = self.stopped
        return other


class Simulation:
    """One in-flight run of a scenario; stepped by schedule events.

    Events are JSON-friendly tuples:
      ("deliver", dest, origin)        causal lane, per-origin FIFO head
      ("pdeliver", dest, origin, seq)  precondition-deferral pool pick
      ("accept", origin)               sequencer takes origin's next submission
      ("sdeliver", dest)               next sequenced op reaches dest
    """

    def __init__(self, scenario: Scenario):
        scenario.validate()
        if not scenario.delivery.causal and scenario.engine != "woot":
            raise ScenarioInvalid("precondition-only delivery applies to the woot engine")
        self.scenario = scenario
        self.sequenced = scenario.engine in SEQUENCED_ENGINES
        self.causal = scenario.delivery.causal
        self.sites: dict[SiteId, _SiteRun] = {
            s: _SiteRun(build_engine(scenario, s), list(scenario.script.get(s, [])))
            for s in scenario.sites
        }
        self.seen: dict[SiteId, VersionVector] = {s: VersionVector() for s in scenario.sites}
        self.inbox: dict[SiteId, dict[SiteId, deque]] = {
            d: {o: deque() for o in scenario.sites if o != d} for d in scenario.sites
        }
        self.pool: dict[SiteId, list[WireOp]] = {d: [] for d in scenario.sites}
        self.submit_fifo: dict[SiteId, deque] = {s: deque() for s in scenario.sites}
        self.assigned: list[WireOp] = []
        self.sptr: dict[SiteId, int] = {s: 0 for s in scenario.sites}
        self.trace: list = []
        self.errors: list = []
        self.gen_log: list = []
        self.applied: list = []
        self.causal_violations = 0
        self.delivery_counts: dict = {}
        self._pump()

    # -- generation ---------------------------------------------------------

    def _pump(self) -> None:
        """Let every site run its script as far as barriers permit."""
        for site_id in sorted(self.sites):
            run = self.sites[site_id]
            while run.cursor < len(run.actions) and not run.stopped:
                action = run.actions[run.cursor]
                if action.kind == "barrier":
                    if run.delivered_remote < action.count:
                        break
                    run.cursor += 1
                    continue
                run.cursor += 1
                self._perform(site_id, run, action)

    def _perform(self, site_id: SiteId, run: _SiteRun, action: Action) -> None:
        engine = run.engine
        state_before = engine.snapshot()
        entry = {
            "site": site_id,
            "action": run.cursor - 1,
            "kind": action.kind,
            "pos": action.pos,
            "state_before": state_before,
            "ops": [],
        }
        try:
            if action.kind == "insert":
                entry["text"] = action.text
                wires = engine.local_run(action.pos, action.text)
                for i, wire in enumerate(wires):
                    op_entry = {
                        "seq": wire.seq,
                        "vv": wire.vv.to_json(),
                        "ch": action.text[i],
                        "pos": action.pos + i,
                    }
                    payload_id = getattr(wire.payload, "id", None)
                    if payload_id is not None:
                        op_entry["id"] = str(payload_id)
                    entry["ops"].append(op_entry)
            else:
                entry["count"] = action.count
                wires = engine.delete_run(action.pos, action.count)
                state = state_before
                for wire in wires:
                    entry["ops"].append(
                        {
                            "seq": wire.seq,
                            "vv": wire.vv.to_json(),
                            "pos": action.pos,
                            "removed": state[action.pos],
                        }
                    )
                    state = state[: action.pos] + state[action.pos + 1 :]
        except GENERATION_ERRORS as exc:
            run.stopped = True
            self.errors.append(
                {
                    "where": f"generate@{site_id}",
                    "action": run.cursor - 1,
                    "error": type(exc).__name__,
                    "detail": str(exc),
                }
            )
            self.gen_log.append(entry)
            return
        self.gen_log.append(entry)
        for wire in wires:
            self._route(site_id, wire)

    def _route(self, origin: SiteId, wire: WireOp) -> None:
        self.seen[origin] = self.seen[origin].merge(wire.vv)
        if self.sequenced:
            if self.scenario.engine == "serialization":
                self.submit_fifo[origin].append(wire)
            else:
                self._poll_submission(origin)
        else:
            for dest in self.sites:
                if dest == origin:
                    continue
                if self.causal:
                    self.inbox[dest][origin].append(wire)
                else:
                    self.pool[dest].append(wire)

    def _poll_submission(self, origin: SiteId) -> None:
        engine = self.sites[origin].engine
        wire = engine.take_submission()
        if wire is not None:
            self.submit_fifo[origin].append(wire)

    # -- events ---------------------------------------------------------------

    def enabled_events(self) -> list[tuple]:
        events: list[tuple] = []
        if self.sequenced:
            for origin in sorted(self.sites):
                if self.submit_fifo[origin]:
                    events.append(("accept", origin))
            for dest in sorted(self.sites):
                if self.sptr[dest] < len(self.assigned):
                    events.append(("sdeliver", dest))
            return events
        if self.causal:
            for dest in sorted(self.sites):
                for origin, q in sorted(self.inbox[dest].items()):
                    if q and causally_ready(q[0].vv, origin, self.seen[dest]):
                        events.append(("deliver", dest, origin))
        else:
            for dest in sorted(self.sites):
                engine = self.sites[dest].engine
                for wire in self.pool[dest]:
                    if engine.ready(wire):
                        events.append(("pdeliver", dest, wire.site, wire.seq))
        return events

    def step(self, event: tuple) -> None:
        kind = event[0]
        self.trace.append(list(event))
        if kind == "accept":
            origin = event[1]
            wire = self.submit_fifo[origin].popleft()
            self.assigned.append(replace(wire, gseq=len(self.assigned) + 1))
            return
        if kind == "sdeliver":
            dest = event[1]
            wire = self.assigned[self.sptr[dest]]
            self.sptr[dest] += 1
            self._deliver(dest, wire)
            return
        if kind == "deliver":
            _, dest, origin = event
            wire = self.inbox[dest][origin].popleft()
            self._deliver(dest, wire)
            return
        if kind == "pdeliver":
            _, dest, origin, seq = event
            pool = self.pool[dest]
            for i, wire in enumerate(pool):
                if wire.site == origin and wire.seq == seq:
                    pool.pop(i)
                    self._deliver(dest, wire)
                    return
            raise ScenarioInvalid(f"no pooled op {(origin, seq)} for site {dest}")
        raise ScenarioInvalid(f"unknown event {event!r}")

    def _deliver(self, dest: SiteId, wire: WireOp) -> None:
        run = self.sites[dest]
        own = wire.site == dest
        if not own and not causally_ready(wire.vv, wire.site, self.seen[dest]):
            self.causal_violations += 1
        key = (wire.site, wire.seq, dest)
        self.delivery_counts[key] = self.delivery_counts.get(key, 0) + 1
        if not own:
            # the delivery happened whether or not the engine can digest it
            self.seen[dest] = self.seen[dest].merge(wire.vv)
            run.delivered_remote += 1
        try:
            eo = run.engine.remote(wire)
        except DELIVERY_ERRORS as exc:
            self.errors.append(
                {
                    "where": f"deliver@{dest}",
                    "origin": wire.site,
                    "seq": wire.seq,
                    "error": type(exc).__name__,
                    "detail": str(exc),
                }
            )
            self._pump()
            return
        self.applied.append(
            {
                "dest": dest,
                "origin": wire.site,
                "seq": wire.seq,
                "gseq": wire.gseq,
                "op": eo.to_json(),
            }
        )
        if own and self.sequenced and self.scenario.engine == "ot-seq":
            self._poll_submission(dest)
        self._pump()

    # -- lifecycle --------------------------------------------------------------

    def _site_done(self, site: SiteId) -> bool:
        run = self.sites[site]
        return run.stopped or run.cursor >= len(run.actions)

    def _quiescent(self, site: SiteId) -> bool:
        """A site whose deliveries can no longer influence any other site:
        its script is finished and it will never submit again."""
        if not self._site_done(site):
            return False
        if self.sequenced:
            if self.submit_fifo[site]:
                return False
            if getattr(self.sites[site].engine, "pending", None):
                return False
        return True

    def _barrier_free(self, site: SiteId) -> bool:
        run = self.sites[site]
        if run.stopped:
            return True
        return all(a.kind != "barrier" for a in run.actions[run.cursor :])

    def ample_events(self, events: list[tuple]) -> list[tuple] | None:
        """Sound schedule reductions.

        Sequenced lane: delivery order at every site is forced by the total
        order, so delivering to a site with no barriers left (its whole
        script is already generated) commutes with every other event and may
        be executed immediately; only the sequencer's accept order (and
        barrier-sensitive deliveries) branch.

        All lanes: deliveries to a quiescent site (script finished, nothing
        left to submit) only affect that site's own state, so branching may
        be confined to one such site's deliveries.  All distinct per-site
        delivery orders -- the only source of outcome differences -- remain
        reachable either way.
        """
        if self.sequenced:
            for event in events:
                if event[0] == "sdeliver" and self._barrier_free(event[1]):
                    return [event]
        for site in sorted(self.sites):
            if not self._quiescent(site):
                continue
            mine = [
                e
                for e in events
                if e[0] in ("deliver", "pdeliver", "sdeliver") and e[1] == site
            ]
            if mine:
                return mine
        return None

    def scripts_done(self) -> bool:
        return all(self._site_done(s) for s in self.sites)

    def pending_deliveries(self) -> int:
        if self.sequenced:
            waiting = sum(len(q) for q in self.submit_fifo.values())
            waiting += sum(len(self.assigned) - p for p in self.sptr.values())
            return waiting
        if self.causal:
            return sum(len(q) for boxes in self.inbox.values() for q in boxes.values())
        return sum(len(p) for p in self.pool.values())

    def finished(self) -> bool:
        return self.scripts_done() and self.pending_deliveries() == 0

    def run_seeded(self, seed: int) -> None:
        rng = random.Random(seed)
        while True:
            events = self.enabled_events()
            if not events:
                break
            self.step(rng.choice(events))
        self._finish_checks()

    def run_events(self, events: list) -> None:
        for event in events:
            self.step(tuple(event))
        self._finish_checks()

    def _finish_checks(self) -> None:
        if not self.finished():
            self.errors.append(
                {
                    "where": "end",
                    "error": "Stalled",
                    "detail": f"{self.pending_deliveries()} deliveries left with no enabled event",
                }
            )

    def report(self, seed: int | None = None) -> Report:
        finals = {str(s): run.engine.snapshot() for s, run in sorted(self.sites.items())}
        digests = {}
        for s, run in sorted(self.sites.items()):
            internal = run.engine.internal_digest()
            if internal is not None:
                digests[str(s)] = _digest(internal)
        # pure state comparison: errors are reported on their own and do not
        # decide convergence (an allocation failure halts a script but the
        # replicas can still agree on everything that was generated)
        converged = len(set(finals.values())) == 1 and len(set(digests.values())) <= 1
        counts_ok = all(v == 1 for v in self.delivery_counts.values())
        expected = self._expected_delivery_keys()
        counts_ok = counts_ok and set(self.delivery_counts) == expected
        sorted_violations = []
        for s, run in sorted(self.sites.items()):
            flags = getattr(run.engine, "sorted_violations", None)
            if flags:
                sorted_violations.extend(flags)
        return Report(
            engine=self.scenario.engine,
            name=self.scenario.name,
            schedule=self.trace,
            seed=seed,
            finals=finals,
            digests=digests,
            converged=converged,
            errors=self.errors,
            causal_violations=self.causal_violations,
            sorted_violations=sorted_violations,
            delivery_counts_ok=counts_ok,
            applied=self.applied,
            gen_log=self.gen_log,
            costs={
                str(s): [c.to_json() for c in run.engine.cost_log]
                for s, run in sorted(self.sites.items())
            },
        )

    def _expected_delivery_keys(self) -> set:
        keys = set()
        for entry in self.gen_log:
            for op in entry["ops"]:
                for dest in self.sites:
                    if self.sequenced:
                        keys.add((entry["site"], op["seq"], dest))
                    elif dest != entry["site"]:
                        keys.add((entry["site"], op["seq"], dest))
        return keys

    def clone(self) -> "Simulation":
        other = Simulation.__new__(Simulation)
        other.scenario = self.scenario
        other.sequenced = self.sequenced
        other.causal = self.causal
        other.sites = {s: run.clone() for s, run in self.sites.items()}
        other.seen = dict(self.seen)
        other.inbox = {
            d: {o: deque(q) for o, q in boxes.items()} for d, boxes in self.inbox.items()
        }
        other.pool = {d: list(p) for d, p in self.pool.items()}
        other.submit_fifo = {s: deque(q) for s, q in self.submit_fifo.items()}
        other.assigned = list(self.assigned)
        other.sptr = dict(self.sptr)
        other.trace = list(self.trace)
        other.errors = list(self.errors)
        other.gen_log = [dict(e, ops=list(e["ops"])) for e in self.gen_log]
        other.applied = list(self.applied)
        other.causal_violations = self.causal_violations
        other.delivery_counts = dict(self.delivery_counts)
        return other


def run_scenario(scenario: Scenario, schedule=None, seed: int | None = None) -> Report:
    """Run one schedule of a scenario and return its report.

    ``schedule`` is an explicit event list; otherwise the scenario's
    delivery spec decides (seeded random walk by default).
    """
    sim = Simulation(scenario)
    if schedule is not None:
        sim.run_events(schedule)
        return sim.report()
    spec = scenario.delivery
    if spec.mode == "explicit":
        if spec.schedule is None:
            raise ScenarioInvalid("explicit delivery requires a schedule")
        sim.run_events(spec.schedule)
        return sim.report()
    use_seed = spec.seed if seed is None else seed
    sim.run_seeded(use_seed)
    return sim.report(seed=use_seed)


def enumerate_schedules(scenario: Scenario, max_schedules: int = 200_000):
    """Yield (events, finished Simulation) for every distinct schedule.

    Depth-first over enabled events; causally-consistent orders only, since
    events are enabled by the same release rules as live runs.  Interleavings
    that merely permute commuting events (deliveries to different quiescent
    sites) are canonicalized, so the count equals the number of combinations
    of per-receiver delivery orders -- per receiver, the linear extensions of
    the happened-before order on its incoming ops.  Raises ``TooLarge`` past
    the scenario op cap or the schedule budget.
    """
    if scenario.total_ops() > scenario.cap:
        raise TooLarge(f"{scenario.total_ops()} ops exceed cap {scenario.cap}")
    produced = 0
    stack: list[Simulation] = [Simulation(scenario)]
    while stack:
        sim = stack.pop()
        events = sim.enabled_events()
        if not events:
            sim._finish_checks()
            produced += 1
            if produced > max_schedules:
                raise TooLarge(f"more than {max_schedules} schedules")
            yield sim.trace, sim
            continue
        events = sim.ample_events(events) or events
        if len(events) == 1:
            sim.step(events[0])
            stack.append(sim)
            continue
        for event in reversed(events):
            branch = sim.clone()
            branch.step(event)
            stack.append(branch)
