"""Tombstone-based sequence CRDT with identifier-addressed operations.

The replicated state is a sequence of objects bracketed by start/end
sentinels.  Each object carries its character, its own immutable id, the
ids of the two objects that were its visible neighbors when it was
created, and a visibility flag.  Deleting never removes an object; it
only clears the flag, leaving a tombstone that keeps identifier lookups
meaningful under concurrency.  Concurrent inserts into the same gap are
ordered deterministically by recursive narrowing over id order, so every
delivery order yields the same sequence.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

from .core import (
    DELETE,
    INSERT,
    Engine,
    ExternalOp,
    OutOfBounds,
    SiteId,
    WireOp,
    apply_external,
    causally_ready,
)

OBJECT_BYTES = 26  # modeled: 3 ids of 8 bytes, visibility flag, character


class PreconditionViolated(Exception):
    """Integration attempted before the op's referenced objects exist."""


@dataclass(frozen=True, order=True)
class WootId:
    sid: int
    seq: int

    @property
    def is_sentinel(self) -> bool:
        return self in (START_ID, END_ID)

    def to_json(self) -> list:
        return [self.sid, self.seq]

    def __str__(self) -> str:
        if self == START_ID:
            return "@s"
        if self == END_ID:
            return "@e"
        return f"({self.sid},{self.seq})"


START_ID = WootId(-1, 0)
END_ID = WootId(1 << 30, 0)


@dataclass
class WootObject:
    ch: str
    id: WootId
    prev: WootId
    next: WootId
    visible: bool


@dataclass(frozen=True)
class WootOp:
    """Identifier-based operation: ins carries the new object's id plus the
    generation-time visible neighbors; del names the target id."""

    kind: str  # "ins" | "del"
    id: WootId
    ch: str = ""
    prev: WootId | None = None
    next: WootId | None = None

    def __str__(self) -> str:
        if self.kind == "ins":
            return f"ins({self.ch!r},{self.id},{self.prev},{self.next})"
        return f"del({self.id})"


def _sentinel(ident: WootId) -> WootObject:
    return WootObject("", ident, ident, ident, False)


class WootSeq:
    """The object sequence for one site, sentinels included."""

    def __init__(self, base: str = "", base_site: SiteId = 0):
        # the shared base document is seeded as if it had been typed left to
        # right: each object's creation-time neighbors are the previous
        # character and the end sentinel, a valid insertion history
        self.objs: list[WootObject] = [_sentinel(START_ID)]
        prev = START_ID
        for i, ch in enumerate(base):
            ident = WootId(base_site, i + 1)
            self.objs.append(WootObject(ch, ident, prev, END_ID, True))
            prev = ident
        self.objs.append(_sentinel(END_ID))
        self.steps = 0  # operation-count meter: object visits during searches

    # -- queries -------------------------------------------------------------

    def value(self) -> str:
        """Visible characters in sequence order (full-scan projection)."""
        return "".join(o.ch for o in self.objs if o.visible)

    def visible_len(self) -> int:
        return sum(1 for o in self.objs if o.visible)

    def object_count(self) -> int:
        return len(self.objs) - 2

    def tombstone_count(self) -> int:
        return sum(1 for o in self.objs[1:-1] if not o.visible)

    def modeled_bytes(self) -> int:
        return OBJECT_BYTES * self.object_count()

    def digest(self) -> tuple:
        return tuple((o.id, o.ch, o.visible) for o in self.objs[1:-1])

    def contains(self, ident: WootId) -> bool:
        return self._find(ident) is not None

    def _find(self, ident: WootId) -> int | None:
        for i, o in enumerate(self.objs):
            self.steps += 1
            if o.id == ident:
                return i
        return None

    def _index_of(self, ident: WootId) -> int:
        idx = self._find(ident)
        if idx is None:
            raise PreconditionViolated(f"unknown object id {ident}")
        return idx

    def _visible_neighbors(self, pos: int) -> tuple[WootId, WootId]:
        """Ids of the visible objects around gap ``pos``, counting visible
        objects only; sentinels bound the ends."""
        prev = START_ID
        seen = 0
        for o in self.objs[1:-1]:
            self.steps += 1
            if not o.visible:
                continue
            if seen == pos:
                return prev, o.id
            prev = o.id
            seen += 1
        return prev, END_ID

    def visible_before(self, index: int) -> int:
        count = 0
        for o in self.objs[1:index]:
            self.steps += 1
            if o.visible:
                count += 1
        return count

    # -- local conversion ------------------------------------------------------

    def local_insert(self, pos: int, ch: str, ident: WootId) -> WootOp:
        if not 0 <= pos <= self.visible_len():
            raise OutOfBounds(f"insert at {pos} on visible length {self.visible_len()}")
        prev, nxt = self._visible_neighbors(pos)
        op = WootOp("ins", ident, ch, prev, nxt)
        self.integrate_ins(op)
        return op

    def local_delete(self, pos: int) -> WootOp:
        if not 0 <= pos < self.visible_len():
            raise OutOfBounds(f"delete at {pos} on visible length {self.visible_len()}")
        seen = 0
        for o in self.objs[1:-1]:
            self.steps += 1
            if o.visible:
                if seen == pos:
                    o.visible = False
                    return WootOp("del", o.id)
                seen += 1
        raise AssertionError("unreachable: bounds were checked")

    # -- integration -----------------------------------------------------------

    def is_executable(self, op: WootOp) -> bool:
        """Delivery precondition: referenced objects already exist here."""
        if op.kind == "del":
            return self.contains(op.id)
        return self.contains(op.prev) and self.contains(op.next)

    def integrate_ins(self, op: WootOp) -> int:
        """Place a new object between its neighbors, deterministically.

        When other objects already sit in the span, only those whose own
        neighbors lie at or outside the span compete; the new object is
        ranked among them by id order and the search recurses into the
        chosen sub-span until it is empty.
        """
        if not self.is_executable(op):
            raise PreconditionViolated(f"{op} references unknown objects")
        lo = self._index_of(op.prev)
        hi = self._index_of(op.next)
        while True:
            if hi - lo < 1:
                raise PreconditionViolated(f"{op} neighbors are inverted")
            if hi - lo == 1:
                self.objs.insert(hi, WootObject(op.ch, op.id, op.prev, op.next, True))
                return hi
            cand = [lo]
            for i in range(lo + 1, hi):
                d = self.objs[i]
                self.steps += 1
                if self._index_of(d.prev) <= lo and self._index_of(d.next) >= hi:
                    cand.append(i)
            cand.append(hi)
            if len(cand) == 2:
                raise PreconditionViolated(
                    f"{op}: no anchor objects inside span; history is inconsistent"
                )
            k = 1
            while k < len(cand) - 1 and self.objs[cand[k]].id < op.id:
                self.steps += 1
                k += 1
            lo, hi = cand[k - 1], cand[k]

    def integrate_del(self, op: WootOp) -> int:
        if op.kind != "del":
            raise ValueError("integrate_del expects a del op")
        idx = self._find(op.id)
        if idx is None:
            raise PreconditionViolated(f"{op} targets an unknown object")
        self.objs[idx].visible = False
        return idx

    def clone(self) -> "WootSeq":
        other = WootSeq.__new__(WootSeq)
        other.objs = [replace(o) for o in self.objs]
        other.steps = self.steps
        return other


def id_to_external(seq: WootSeq, op: WootOp, internal_pos: int, was_visible: bool = True) -> ExternalOp:
    """Derive the position-based op an integration had on the visible text.

    This is the conversion that turns an identifier-based remote op into
    the edit actually replayed on the document: count the visible objects
    before the target.  A delete whose target was already invisible maps
    to identity (concurrent deletes of the same character).
    """
    if op.kind == "ins":
        return ExternalOp.insert(seq.visible_before(internal_pos), op.ch)
    if not was_visible:
        return ExternalOp.identity()
    return ExternalOp.delete(seq.visible_before(internal_pos))


class WootSite(Engine):
    """Engine wrapper: object sequence plus the external document mirror."""

    def __init__(
        self,
        site: SiteId,
        base: str = "",
        base_site: SiteId = 0,
        verify_projection: bool = True,
    ):
        super().__init__(site)
        self.seq = WootSeq(base, base_site)
        self.state = base
        self.id_seq = 0
        self.verify_projection = verify_projection

    def snapshot(self) -> str:
        return self.state

    def internal_digest(self):
        return self.seq.digest()

    def _check(self) -> None:
        if self.verify_projection and self.seq.value() != self.state:
            raise AssertionError(
                f"site {self.site}: projection {self.seq.value()!r} != state {self.state!r}"
            )

    def local(self, op: ExternalOp) -> WireOp:
        before = self.seq.steps
        if op.kind == INSERT:
            self.id_seq += 1
            payload = self.seq.local_insert(op.pos, op.ch, WootId(self.site, self.id_seq))
        elif op.kind == DELETE:
            payload = self.seq.local_delete(op.pos)
        else:
            raise ValueError("identity ops are not generated by users")
        self.state = apply_external(self.state, op)
        self._check()
        self._charge("local", self.seq.steps - before)
        return self._next_wire(payload)

    def ready(self, wire: WireOp) -> bool:
        return self.seq.is_executable(wire.payload)

    def remote(self, wire: WireOp) -> ExternalOp:
        op: WootOp = wire.payload
        before = self.seq.steps
        if op.kind == "ins":
            pos = self.seq.integrate_ins(op)
            eo = id_to_external(self.seq, op, pos)
        else:
            idx = self.seq._index_of(op.id)
            was_visible = self.seq.objs[idx].visible
            self.seq.integrate_del(op)
            eo = id_to_external(self.seq, op, idx, was_visible)
        self.state = apply_external(self.state, eo)
        self.vv = self.vv.merge(wire.vv)
        self._check()
        self._charge("remote", self.seq.steps - before)
        return eo

    def clone(self) -> "WootSite":
        other = WootSite.__new__(WootSite)
        Engine.__init__(other, self.site)
        self._clone_base(other)
        other.seq = self.seq.clone()
        other.state = self.state
        other.id_seq = self.id_seq
        other.verify_projection = self.verify_projection
        return other


def causal_and_executable(site: WootSite, wire: WireOp) -> bool:
    """Default delivery condition: causally ready and executable."""
    return causally_ready(wire.vv, wire.site, site.vv) and site.ready(wire)
