"""Operation-count and wall-clock measurement of per-op handling costs.

The primary metric is deterministic operation counts (comparisons and list
steps as metered by each engine); wall-clock quantiles ride along as a
secondary signal.  Asymptotic claims are exercised as monotone trends and
flatness ratios over a few document sizes, never as fitted exponents.

Documents are synthesized directly at each size; per-op costs are then
measured on single ops, with concurrency degree controlled by withholding
acknowledgements so a known number of pending ops must be transformed.
"""
from __future__ import annotations

import json
import random
import statistics
import time
from dataclasses import dataclass, field, replace

from .core import ExternalOp, VersionVector
from .logoot import DEFAULT_BASE, LogootSite, RngScript, construct_ids, synthesize_doc
from .ot import OtPayload, OtSequencerSite
from .woot import WootId, WootOp, WootSeq, WootSite


@dataclass
class BenchConfig:
    engine: str
    doc_sizes: list[int] = field(default_factory=lambda: [1_000, 10_000, 100_000])
    concurrency: list[int] = field(default_factory=lambda: [0, 5, 10])
    session: int = 3
    repetitions: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.repetitions < 3:
            raise ValueError("need at least 3 repetitions")
        if any(s <= 0 for s in self.doc_sizes):
            raise ValueError("document sizes must be positive")

    @classmethod
    def from_json(cls, data: dict) -> "BenchConfig":
        return cls(
            engine=data["engine"],
            doc_sizes=list(data.get("doc_sizes", [1_000, 10_000, 100_000])),
            concurrency=list(data.get("concurrency", [0, 5, 10])),
            session=data.get("session", 3),
            repetitions=data.get("repetitions", 3),
            seed=data.get("seed", 0),
        )


@dataclass
class BenchRecord:
    engine: str
    op_kind: str          # "local" | "remote"
    doc_size: int         # C: visible characters
    doc_size_total: int   # C_t: objects including tombstones (== C without)
    concurrency: int
    steps: list[int]
    wall_ns: list[int]
    modeled_bytes: int = 0

    def to_json(self) -> dict:
        return {
            "engine": self.engine,
            "op_kind": self.op_kind,
            "C": self.doc_size,
            "C_t": self.doc_size_total,
            "c": self.concurrency,
            "steps_median": int(statistics.median(self.steps)),
            "steps_min": min(self.steps),
            "steps_max": max(self.steps),
            "wall_ns_p50": int(statistics.median(self.wall_ns)),
            "wall_ns_p90": int(sorted(self.wall_ns)[max(0, int(len(self.wall_ns) * 0.9) - 1)]),
            "modeled_bytes": self.modeled_bytes,
        }


def _woot_fixture(visible: int, tombstones: int = 0) -> WootSite:
    site = WootSite(1, "x" * (visible + tombstones), verify_projection=False)
    if tombstones:
        for obj in site.seq.objs[1 : tombstones + 1]:
            obj.visible = False
        site.state = site.seq.value()
    return site


def _logoot_fixture(visible: int) -> LogootSite:
    site = LogootSite(1, "", base=DEFAULT_BASE, rng=RngScript("seeded", seed=1))
    site.doc = synthesize_doc(visible, DEFAULT_BASE)
    site.state = site.doc.text()
    return site


def _ot_fixture(visible: int) -> OtSequencerSite:
    return OtSequencerSite(1, "x" * visible)


def _measure(fn, repetitions: int) -> tuple[list[int], list[int]]:
    steps, wall = [], []
    for _ in range(repetitions):
        engine, run = fn()
        t0 = time.perf_counter_ns()
        run()
        wall.append(time.perf_counter_ns() - t0)
        steps.append(engine.cost_log[-1].steps)
    return steps, wall


def _remote_wire(origin: int, seq: int, payload, gseq=None):
    from .core import WireOp

    return WireOp(origin, seq, VersionVector({origin: seq}), payload, gseq)


def bench_time(cfg: BenchConfig) -> list[BenchRecord]:
    """Per-op handling costs across document sizes and concurrency degrees."""
    records: list[BenchRecord] = []
    rng = random.Random(cfg.seed)
    for size in cfg.doc_sizes:
        if cfg.engine == "ot-seq":
            records.extend(_bench_ot(cfg, size, rng))
        elif cfg.engine == "woot":
            records.extend(_bench_woot(cfg, size, rng))
        elif cfg.engine in ("logoot-strict", "logoot-patched"):
            records.extend(_bench_logoot(cfg, size, rng))
        else:
            raise ValueError(f"no time benchmark for engine {cfg.engine!r}")
    return records


def _bench_ot(cfg: BenchConfig, size: int, rng: random.Random) -> list[BenchRecord]:
    records = []

    def local_case():
        site = _ot_fixture(size)
        pos = rng.randrange(size)
        return site, lambda: site.local(ExternalOp.insert(pos, "q"))

    steps, wall = _measure(local_case, cfg.repetitions)
    records.append(BenchRecord(cfg.engine, "local", size, size, 0, steps, wall))

    for c in cfg.concurrency:
        def remote_case():
            site = _ot_fixture(size)
            # withhold acknowledgements for c local ops: the next remote op
            # must be transformed against each of them
            for k in range(c):
                site.local(ExternalOp.insert(rng.randrange(size), "p"))
                site.take_submission()
            wire = _remote_wire(2, 1, OtPayload(ExternalOp.insert(rng.randrange(size), "r"), 0), gseq=1)
            return site, lambda: site.remote(wire)

        steps, wall = _measure(remote_case, cfg.repetitions)
        records.append(BenchRecord(cfg.engine, "remote", size, size, c, steps, wall))
    return records


def _bench_woot(cfg: BenchConfig, size: int, rng: random.Random) -> list[BenchRecord]:
    records = []
    tombstones = size // 2

    def local_case():
        site = _woot_fixture(size)
        pos = rng.randrange(size)
        return site, lambda: site.local(ExternalOp.insert(pos, "q"))

    steps, wall = _measure(local_case, cfg.repetitions)
    records.append(
        BenchRecord(cfg.engine, "local", size, size, 0, steps, wall,
                    modeled_bytes=_woot_fixture(size).seq.modeled_bytes())
    )

    def remote_case():
        site = _woot_fixture(size, tombstones)
        anchor = rng.randrange(1, size + tombstones)
        prev = site.seq.objs[anchor].id
        nxt = site.seq.objs[anchor + 1].id
        op = WootOp("ins", WootId(9, 1), "r", prev, nxt)
        wire = _remote_wire(9, 1, op)
        return site, lambda: site.remote(wire)

    steps, wall = _measure(remote_case, cfg.repetitions)
    records.append(
        BenchRecord(cfg.engine, "remote", size, size + tombstones, 0, steps, wall,
                    modeled_bytes=_woot_fixture(size, tombstones).seq.modeled_bytes())
    )
    return records


def _bench_logoot(cfg: BenchConfig, size: int, rng: random.Random) -> list[BenchRecord]:
    records = []

    def local_case():
        site = _logoot_fixture(size)
        pos = rng.randrange(size)
        return site, lambda: site.local(ExternalOp.insert(pos, "q"))

    steps, wall = _measure(local_case, cfg.repetitions)
    records.append(
        BenchRecord(cfg.engine, "local", size, size, 0, steps, wall,
                    modeled_bytes=_logoot_fixture(size).doc.id_stats()["modeled_bytes"])
    )

    def remote_case():
        site = _logoot_fixture(size)
        pos = rng.randrange(1, size)
        left, right = site.doc.neighbors(pos)
        ident = construct_ids(left, right, 1, 9, RngScript("seeded", seed=rng.randrange(1 << 30)),
                              base=DEFAULT_BASE, mode="strict")[0]
        from .logoot import LogootOp

        wire = _remote_wire(9, 1, LogootOp("ins", ident, "r"))
        return site, lambda: site.remote(wire)

    steps, wall = _measure(remote_case, cfg.repetitions)
    records.append(BenchRecord(cfg.engine, "remote", size, size, 0, steps, wall))
    return records


# -- space model ---------------------------------------------------------------


@dataclass
class SpaceReport:
    engine: str
    doc_chars: int
    objects: int
    tombstones: int
    modeled_bytes: int
    byte_overhead_ratio: float
    tombstone_ratio: float
    buffer_before_gc: int | None = None
    buffer_after_gc: int | None = None
    id_stats: dict | None = None

    def to_json(self) -> dict:
        out = {
            "engine": self.engine,
            "doc_chars": self.doc_chars,
            "objects": self.objects,
            "tombstones": self.tombstones,
            "modeled_bytes": self.modeled_bytes,
            "byte_overhead_ratio": round(self.byte_overhead_ratio, 2),
            "tombstone_ratio": round(self.tombstone_ratio, 2),
        }
        if self.buffer_before_gc is not None:
            out["buffer_before_gc"] = self.buffer_before_gc
            out["buffer_after_gc"] = self.buffer_after_gc
        if self.id_stats is not None:
            out["id_stats"] = self.id_stats
        return out


def woot_space(visible: int, deletions: int) -> SpaceReport:
    """Space model for a session that kept ``visible`` characters after
    ``deletions`` deletes: every deleted character stays as a tombstone."""
    seq = WootSeq("x" * (visible + deletions))
    for obj in seq.objs[1 : deletions + 1]:
        obj.visible = False
    doc_chars = seq.visible_len()
    return SpaceReport(
        engine="woot",
        doc_chars=doc_chars,
        objects=seq.object_count(),
        tombstones=seq.tombstone_count(),
        modeled_bytes=seq.modeled_bytes(),
        byte_overhead_ratio=seq.modeled_bytes() / max(doc_chars, 1),
        tombstone_ratio=seq.tombstone_count() / max(doc_chars, 1),
    )


def ot_space(ops: int = 6) -> SpaceReport:
    """Buffer footprint of a fully synced two-site session, then collected."""
    a, b = OtSequencerSite(1, "base"), OtSequencerSite(2, "base")
    gseq = 0
    for k in range(ops):
        src, dst = (a, b) if k % 2 == 0 else (b, a)
        src.local(ExternalOp.insert(0, chr(ord("a") + k)))
        wire = src.take_submission()
        gseq += 1
        wire = replace(wire, gseq=gseq)
        src.remote(wire)
        dst.remote(wire)
    before = len(a.buf)
    global_min = VersionVector(
        {s: min(a.vv.get(s), b.vv.get(s)) for s in (1, 2)}
    )
    removed_a = a.garbage_collect(global_min)
    b.garbage_collect(global_min)
    return SpaceReport(
        engine="ot-seq",
        doc_chars=len(a.snapshot()),
        objects=0,
        tombstones=0,
        modeled_bytes=0,
        byte_overhead_ratio=0.0,
        tombstone_ratio=0.0,
        buffer_before_gc=before,
        buffer_after_gc=before - removed_a,
    )


def logoot_head_insert_space(k: int, base: int = 10, seed: int = 0) -> SpaceReport:
    """Identifier growth under a repeated head-insertion workload."""
    site = LogootSite(1, "", base=base, rng=RngScript("seeded", seed=seed))
    for i in range(k):
        site.local(ExternalOp.insert(0, chr(ord("a") + i % 26)))
    stats = site.doc.id_stats()
    return SpaceReport(
        engine="logoot-strict",
        doc_chars=len(site.snapshot()),
        objects=len(site.doc),
        tombstones=0,
        modeled_bytes=stats["modeled_bytes"],
        byte_overhead_ratio=stats["modeled_bytes"] / max(len(site.snapshot()), 1),
        tombstone_ratio=0.0,
        id_stats=stats,
    )


def bench_space(cfg: BenchConfig, trace: dict) -> SpaceReport:
    """Replay a space trace for the configured engine.

    Trace fields: woot: {"visible": n, "deletes": m}; ot-seq: {"ops": n};
    logoot: {"head_inserts": k, "base": b}.
    """
    if cfg.engine == "woot":
        return woot_space(trace.get("visible", 553), trace.get("deletes", 16_000))
    if cfg.engine == "ot-seq":
        return ot_space(trace.get("ops", 6))
    if cfg.engine.startswith("logoot"):
        return logoot_head_insert_space(
            trace.get("head_inserts", 40), trace.get("base", 10), cfg.seed
        )
    raise ValueError(f"no space model for engine {cfg.engine!r}")


def render_records(records: list[BenchRecord]) -> str:
    """Human-readable table plus one JSON line per record."""
    lines = [
        f"{'engine':<15}{'kind':<8}{'C':>9}{'C_t':>9}{'c':>4}{'steps(med)':>12}{'p50 us':>9}"
    ]
    for rec in records:
        data = rec.to_json()
        lines.append(
            f"{data['engine']:<15}{data['op_kind']:<8}{data['C']:>9}{data['C_t']:>9}"
            f"{data['c']:>4}{data['steps_median']:>12}{data['wall_ns_p50'] / 1000:>9.1f}"
        )
    return "\n".join(lines)


def records_jsonl(records: list[BenchRecord]) -> str:
    return "\n".join(json.dumps(r.to_json(), sort_keys=True) for r in records)
