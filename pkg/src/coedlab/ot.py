"""Operational transformation engine for position-based text operations.

Two control lanes are provided.  The sequencer lane is the sound one: a
total order is stamped onto every op, each site submits at most one op at a
time, pending local ops are transformed incrementally against incoming
sequenced ops, and remote ops are transformed against exactly the sequenced
ops they are concurrent with.  The arbitrary lane deliberately reproduces
the classic broken control discipline -- transform against anything
concurrent, in whatever order the buffer happens to hold -- so that the
simulation oracles can catch the divergence it causes.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass, replace

from .core import (
    DELETE,
    IDENTITY,
    INSERT,
    CostRecord,
    Engine,
    ExternalOp,
    Ordering,
    OutOfBounds,
    SiteId,
    VersionVector,
    WireOp,
    apply_external,
    causal_compare,
)


class GapInSequence(Exception):
    """A sequenced op arrived out of total order."""


class NotOwnHead(Exception):
    """An acknowledgement did not match the site's oldest pending op."""


@dataclass(frozen=True)
class TimestampedOp:
    """Internal operation record: the external op plus its timestamps."""

    op: ExternalOp
    site: SiteId
    vv: VersionVector
    gseq: int | None = None


@dataclass(frozen=True)
class OtPayload:
    """Wire payload: the op plus the sequenced-prefix length it was
    submitted against (sequencer lane only; zero in the arbitrary lane)."""

    op: ExternalOp
    ctx_gseq: int = 0


class _TransformMeter:
    """Counts transform invocations; the unit of work in this engine."""

    calls = 0

    @classmethod
    def reset(cls) -> int:
        before = cls.calls
        cls.calls = 0
        return before


def transform(a: ExternalOp, b: ExternalOp, a_site: SiteId, b_site: SiteId) -> ExternalOp:
    """One compare-calculate step: adjust ``a`` for the effect of concurrent ``b``.

    Both operations must be defined on the same document state; keeping
    that true is the caller's obligation.  Insert-insert ties keep the op
    from the lower site id in place and shift the other right.  Two deletes
    of the same position collapse to identity.
    """
    _TransformMeter.calls += 1
    if a.is_identity or b.is_identity:
        return a
    if a.kind == INSERT and b.kind == INSERT:
        if a.pos < b.pos or (a.pos == b.pos and a_site < b_site):
            return a
        return a.shifted(1)
    if a.kind == INSERT and b.kind == DELETE:
        if a.pos <= b.pos:
            return a
        return a.shifted(-1)
    if a.kind == DELETE and b.kind == INSERT:
        if a.pos < b.pos:
            return a
        return a.shifted(1)
    # delete against delete
    if a.pos < b.pos:
        return a
    if a.pos > b.pos:
        return a.shifted(-1)
    return ExternalOp.identity()


def check_cp1(a: ExternalOp, b: ExternalOp, ds: str, a_site: SiteId = 1, b_site: SiteId = 2) -> bool:
    """Pairwise convergence: both application orders produce the same state."""
    left = apply_external(apply_external(ds, a), transform(b, a, b_site, a_site))
    right = apply_external(apply_external(ds, b), transform(a, b, a_site, b_site))
    return left == right


def check_cp2(
    a: ExternalOp,
    b: ExternalOp,
    c: ExternalOp,
    ds: str,
    sites: tuple[SiteId, SiteId, SiteId] = (1, 2, 3),
) -> tuple[ExternalOp, ExternalOp] | None:
    """Transformation-order property for a third op.

    Returns None when transforming ``a`` along b-then-c' equals a along
    c-then-b'; otherwise returns the two divergent results.
    """
    sa, sb, sc = sites
    b_after_c = transform(b, c, sb, sc)
    c_after_b = transform(c, b, sc, sb)
    path_b_first = transform(transform(a, b, sa, sb), c_after_b, sa, sc)
    path_c_first = transform(transform(a, c, sa, sc), b_after_c, sa, sb)
    if path_b_first == path_c_first:
        return None
    return (path_b_first, path_c_first)


def cp2_tie_signature(
    a: ExternalOp,
    b: ExternalOp,
    c: ExternalOp,
    sites: tuple[SiteId, SiteId, SiteId] = (1, 2, 3),
) -> bool:
    """True when the final transform step of either path is an insert-insert
    position tie between transformed operations (the false-tie shape)."""
    sa, sb, sc = sites
    a_after_b = transform(a, b, sa, sb)
    a_after_c = transform(a, c, sa, sc)
    b_after_c = transform(b, c, sb, sc)
    c_after_b = transform(c, b, sc, sb)
    tie_b_path = (
        a_after_b.kind == INSERT
        and c_after_b.kind == INSERT
        and a_after_b.pos == c_after_b.pos
    )
    tie_c_path = (
        a_after_c.kind == INSERT
        and b_after_c.kind == INSERT
        and a_after_c.pos == b_after_c.pos
    )
    return tie_b_path or tie_c_path


class OtSequencerSite(Engine):
    """Context-correct OT site driven by a global total order.

    Local ops apply immediately and queue in ``pending``; only the head of
    the queue is ever in flight to the sequencer, so every submitted op is
    defined exactly on the sequenced prefix named by its ``ctx_gseq``.
    Remote sequenced ops are transformed against the buffered sequenced
    ops they are concurrent with, then against the pending queue (which is
    symmetrically updated).  A site's own op comes back as an
    acknowledgement and pops the pending head.
    """

    mode = "sequencer"

    def __init__(self, site: SiteId, base: str = ""):
        super().__init__(site)
        self.state = base
        self.buf: list[TimestampedOp] = []       # sequenced history, gseq order
        self.pending: list[TimestampedOp] = []   # local ops not yet acknowledged
        self.integrated_gseq = 0
        self._in_flight = False

    def snapshot(self) -> str:
        return self.state

    def local(self, op: ExternalOp) -> WireOp:
        self.state = apply_external(self.state, op)
        wire = self._next_wire(OtPayload(op))
        self.pending.append(TimestampedOp(op, self.site, wire.vv))
        # constant work: no buffer scan happens on the local path
        self._charge("local", 1)
        return wire

    def take_submission(self) -> WireOp | None:
        """Wire form of the pending head, once per acknowledgement cycle.

        The op is shipped in its current transformed shape together with
        the length of the sequenced prefix it is defined on.
        """
        if self._in_flight or not self.pending:
            return None
        head = self.pending[0]
        self._in_flight = True
        return WireOp(
            self.site,
            head.vv.get(self.site),
            head.vv,
            OtPayload(head.op, self.integrated_gseq),
        )

    def remote(self, wire: WireOp) -> ExternalOp:
        if wire.gseq is None:
            raise GapInSequence("sequencer lane requires a global sequence number")
        if wire.gseq != self.integrated_gseq + 1:
            raise GapInSequence(
                f"expected gseq {self.integrated_gseq + 1}, got {wire.gseq}"
            )
        self.integrated_gseq = wire.gseq
        if wire.site == self.site:
            return self._acknowledge(wire)

        steps = 0
        cur = wire.payload.op
        # ops sequenced after the submission context are exactly the
        # concurrent ones; everything earlier is already reflected in cur
        start = bisect.bisect_right([rec.gseq for rec in self.buf], wire.payload.ctx_gseq)
        for rec in self.buf[start:]:
            cur = transform(cur, rec.op, wire.site, rec.site)
            steps += 1
        # the buffered (canonical) form is relative to the sequenced prefix
        # only; transforms against the local pending queue produce just the
        # op actually applied here
        self.buf.append(TimestampedOp(cur, wire.site, wire.vv, wire.gseq))
        new_pending = []
        for rec in self.pending:
            transformed = transform(rec.op, cur, self.site, wire.site)
            cur = transform(cur, rec.op, wire.site, rec.site)
            new_pending.append(replace(rec, op=transformed))
            steps += 2
        self.pending = new_pending
        self.state = apply_external(self.state, cur)
        self.vv = self.vv.merge(wire.vv)
        self._charge("remote", max(steps, 1))
        return cur

    def _acknowledge(self, wire: WireOp) -> ExternalOp:
        if not self.pending or self.pending[0].vv.get(self.site) != wire.seq:
            raise NotOwnHead(f"acknowledgement {wire.key()} does not match pending head")
        head = self.pending.pop(0)
        self._in_flight = False
        # canonical sequenced form: the head as transformed so far
        self.buf.append(replace(head, gseq=wire.gseq))
        self._charge("remote", 1)
        return ExternalOp.identity()

    def garbage_collect(self, global_min: VersionVector) -> int:
        """Drop buffered ops already seen by every site."""
        keep = [rec for rec in self.buf if not rec.vv.dominated_by(global_min)]
        removed = len(self.buf) - len(keep)
        self.buf = keep
        return removed

    def clone(self) -> "OtSequencerSite":
        other = OtSequencerSite.__new__(OtSequencerSite)
        Engine.__init__(other, self.site)
        self._clone_base(other)
        other.state = self.state
        other.buf = list(self.buf)
        other.pending = list(self.pending)
        other.integrated_gseq = self.integrated_gseq
        other._in_flight = self._in_flight
        return other


class OtArbitrarySite(Engine):
    """OT site that transforms against anything concurrent, in buffer order.

    No context discipline is applied, so concurrent ops defined on
    different states get compared as if they were not.  This lane exists
    to exhibit that divergence; it is unsound and labeled as such in
    every report.
    """

    mode = "arbitrary"

    def __init__(self, site: SiteId, base: str = ""):
        super().__init__(site)
        self.state = base
        self.buf: list[TimestampedOp] = []

    def snapshot(self) -> str:
        return self.state

    def local(self, op: ExternalOp) -> WireOp:
        self.state = apply_external(self.state, op)
        wire = self._next_wire(OtPayload(op))
        self.buf.append(TimestampedOp(op, self.site, wire.vv))
        self._charge("local", 1)
        return wire

    def ready(self, wire: WireOp) -> bool:
        from .core import causally_ready

        return causally_ready(wire.vv, wire.site, self.vv)

    def remote(self, wire: WireOp) -> ExternalOp:
        cur = wire.payload.op
        steps = 0
        for rec in self.buf:
            if causal_compare(rec.vv, wire.vv) is Ordering.CONCURRENT:
                cur = transform(cur, rec.op, wire.site, rec.site)
            steps += 1
        self.state = apply_external(self.state, cur)
        self.buf.append(TimestampedOp(cur, wire.site, wire.vv))
        self.vv = self.vv.merge(wire.vv)
        self._charge("remote", max(steps, 1))
        return cur

    def garbage_collect(self, global_min: VersionVector) -> int:
        keep = [rec for rec in self.buf if not rec.vv.dominated_by(global_min)]
        removed = len(self.buf) - len(keep)
        self.buf = keep
        return removed

    def clone(self) -> "OtArbitrarySite":
        other = OtArbitrarySite.__new__(OtArbitrarySite)
        Engine.__init__(other, self.site)
        self._clone_base(other)
        other.state = self.state
        other.buf = list(self.buf)
        return other


class SerializationSite(Engine):
    """Strawman: replay remote ops in their original form, no transformation.

    Local edits still apply immediately, so concurrent runs interleave
    original positions with already-shifted documents.  Exists to show why
    plain serialization cannot preserve the local effect of an edit.
    """

    mode = "serialization"

    def __init__(self, site: SiteId, base: str = ""):
        super().__init__(site)
        self.state = base
        self.integrated_gseq = 0

    def snapshot(self) -> str:
        return self.state

    def local(self, op: ExternalOp) -> WireOp:
        self.state = apply_external(self.state, op)
        self._charge("local", 1)
        return self._next_wire(OtPayload(op))

    def remote(self, wire: WireOp) -> ExternalOp:
        if wire.gseq is not None:
            if wire.gseq != self.integrated_gseq + 1:
                raise GapInSequence(
                    f"expected gseq {self.integrated_gseq + 1}, got {wire.gseq}"
                )
            self.integrated_gseq = wire.gseq
        if wire.site == self.site:
            self._charge("remote", 1)
            return ExternalOp.identity()
        op = wire.payload.op
        self.state = apply_external(self.state, op)
        self.vv = self.vv.merge(wire.vv)
        self._charge("remote", 1)
        return op

    def clone(self) -> "SerializationSite":
        other = SerializationSite.__new__(SerializationSite)
        Engine.__init__(other, self.site)
        self._clone_base(other)
        other.state = self.state
        other.integrated_gseq = self.integrated_gseq
        return other
