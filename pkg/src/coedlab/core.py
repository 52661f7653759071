"""Shared document/operation model for replicated-text engines.

Every engine in this package edits the same kind of external document -- a
plain sequence of unicode characters addressed by zero-based positions --
and speaks the same interface: apply a user edit locally and hand back a
wire operation for broadcast, or accept a remote wire operation and return
the position-based edit that was replayed on the local document.
"""
from __future__ import annotations

import abc
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Iterable, Mapping

SiteId = int

INSERT = "insert"
DELETE = "delete"
IDENTITY = "identity"


class OutOfBounds(Exception):
    """Operation position outside the current document bounds."""


@dataclass(frozen=True)
class ExternalOp:
    """Position-based edit on a character sequence.

    ``identity`` carries no position or character and leaves any document
    unchanged; it is the result of edits that cancel out under concurrency
    (for example two deletes of the same character).
    """

    kind: str
    pos: int = -1
    ch: str = ""

    @classmethod
    def insert(cls, pos: int, ch: str) -> "ExternalOp":
        if len(ch) != 1:
            raise ValueError("insert carries exactly one character")
        return cls(INSERT, pos, ch)

    @classmethod
    def delete(cls, pos: int) -> "ExternalOp":
        return cls(DELETE, pos)

    @classmethod
    def identity(cls) -> "ExternalOp":
        return cls(IDENTITY)

    @property
    def is_identity(self) -> bool:
        return self.kind == IDENTITY

    def shifted(self, delta: int) -> "ExternalOp":
        return replace(self, pos=self.pos + delta)

    def to_json(self) -> dict:
        if self.is_identity:
            return {"kind": IDENTITY}
        out = {"kind": self.kind, "pos": self.pos}
        if self.kind == INSERT:
            out["ch"] = self.ch
        return out

    @classmethod
    def from_json(cls, data: Mapping) -> "ExternalOp":
        kind = data["kind"]
        if kind == IDENTITY:
            return cls.identity()
        if kind == INSERT:
            return cls.insert(data["pos"], data["ch"])
        return cls.delete(data["pos"])

    def __str__(self) -> str:
        if self.kind == INSERT:
            return f"I({self.pos},{self.ch!r})"
        if self.kind == DELETE:
            return f"D({self.pos})"
        return "Id"


def apply_external(state: str, op: ExternalOp) -> str:
    """Apply a position-based edit to a document string.

    Raises ``OutOfBounds`` when the position does not address the current
    document, which signals a broken engine or a malformed scenario rather
    than a recoverable condition.
    """
    if op.is_identity:
        return state
    if op.kind == INSERT:
        if not 0 <= op.pos <= len(state):
            raise OutOfBounds(f"insert at {op.pos} on document of length {len(state)}")
        return state[: op.pos] + op.ch + state[op.pos :]
    if op.kind == DELETE:
        if not 0 <= op.pos < len(state):
            raise OutOfBounds(f"delete at {op.pos} on document of length {len(state)}")
        return state[: op.pos] + state[op.pos + 1 :]
    raise ValueError(f"unknown operation kind {op.kind!r}")


class Ordering(Enum):
    BEFORE = "before"
    AFTER = "after"
    CONCURRENT = "concurrent"
    EQUAL = "equal"


class VersionVector:
    """Per-site operation counters realizing the happened-before relation.

    Instances are immutable; ``bump`` and ``merge`` return new vectors.
    Absent entries read as zero.
    """

    __slots__ = ("_counts",)

    def __init__(self, counts: Mapping[SiteId, int] | None = None):
        self._counts = {s: int(c) for s, c in (counts or {}).items() if c}

    def get(self, site: SiteId) -> int:
        return self._counts.get(site, 0)

    def items(self) -> Iterable[tuple[SiteId, int]]:
        return self._counts.items()

    def bump(self, site: SiteId) -> "VersionVector":
        out = dict(self._counts)
        out[site] = out.get(site, 0) + 1
        return VersionVector(out)

    def merge(self, other: "VersionVector") -> "VersionVector":
        out = dict(self._counts)
        for site, count in other.items():
            if count > out.get(site, 0):
                out[site] = count
        return VersionVector(out)

    def dominated_by(self, other: "VersionVector") -> bool:
        return all(c <= other.get(s) for s, c in self._counts.items())

    def to_json(self) -> dict:
        return {str(s): c for s, c in sorted(self._counts.items())}

    @classmethod
    def from_json(cls, data: Mapping) -> "VersionVector":
        return cls({int(s): c for s, c in data.items()})

    def __eq__(self, other: object) -> bool:
        return isinstance(other, VersionVector) and self._counts == other._counts

    def __hash__(self) -> int:
        return hash(tuple(sorted(self._counts.items())))

    def __repr__(self) -> str:
        inner = ",".join(f"{s}:{c}" for s, c in sorted(self._counts.items()))
        return "{" + inner + "}"


def vv_merge(a: VersionVector, b: VersionVector) -> VersionVector:
    return a.merge(b)


def causal_compare(a: VersionVector, b: VersionVector) -> Ordering:
    """Order two version vectors: before, after, concurrent, or equal."""
    a_le_b = a.dominated_by(b)
    b_le_a = b.dominated_by(a)
    if a_le_b and b_le_a:
        return Ordering.EQUAL
    if a_le_b:
        return Ordering.BEFORE
    if b_le_a:
        return Ordering.AFTER
    return Ordering.CONCURRENT


def causally_ready(op_vv: VersionVector, origin: SiteId, seen: VersionVector) -> bool:
    """True when an op may be delivered to a site that has seen ``seen``.

    The op must be the next one from its origin, and every other entry of
    its vector must already be covered locally.
    """
    if op_vv.get(origin) != seen.get(origin) + 1:
        return False
    return all(count <= seen.get(site) for site, count in op_vv.items() if site != origin)


@dataclass(frozen=True)
class WireOp:
    """Envelope for an operation in flight between sites.

    ``seq`` is the origin-local generation counter (1-based) and ``vv`` the
    origin's vector immediately after generating the op.  ``payload`` is
    engine-specific.  ``gseq`` is assigned by the sequencer lane only.
    """

    site: SiteId
    seq: int
    vv: VersionVector
    payload: Any
    gseq: int | None = None

    def key(self) -> tuple[SiteId, int]:
        return (self.site, self.seq)


@dataclass
class CostRecord:
    """Deterministic operation-count cost of handling one op."""

    kind: str  # "local" | "remote"
    steps: int

    def to_json(self) -> dict:
        return {"kind": self.kind, "steps": self.steps}


class Engine(abc.ABC):
    """One site's consistency-maintenance engine.

    ``local`` must leave the engine's document already edited before it
    returns the wire form; ``remote`` must return the position-based op it
    replayed on the local document (identity when the remote op had no
    visible effect here).
    """

    def __init__(self, site: SiteId):
        self.site = site
        self.vv = VersionVector()
        self.local_seq = 0
        self.cost_log: list[CostRecord] = []

    @abc.abstractmethod
    def snapshot(self) -> str:
        """Current external document state."""

    @abc.abstractmethod
    def local(self, op: ExternalOp) -> WireOp:
        ...

    @abc.abstractmethod
    def remote(self, wire: WireOp) -> ExternalOp:
        ...

    def ready(self, wire: WireOp) -> bool:
        """Engine-specific delivery precondition; default: always ready."""
        return True

    def internal_digest(self):
        """Comparable view of internal replicated state, or None."""
        return None

    def local_run(self, pos: int, text: str) -> list[WireOp]:
        """Insert a string as per-character ops, sequential at this site."""
        return [self.local(ExternalOp.insert(pos + i, ch)) for i, ch in enumerate(text)]

    def delete_run(self, pos: int, count: int) -> list[WireOp]:
        return [self.local(ExternalOp.delete(pos)) for _ in range(count)]

    def clone(self) -> "Engine":
        raise NotImplementedError

    # -- bookkeeping helpers ------------------------------------------------

    def _next_wire(self, payload: Any) -> WireOp:
        self.local_seq += 1
        self.vv = self.vv.bump(self.site)
        return WireOp(self.site, self.local_seq, self.vv, payload)

    def _charge(self, kind: str, steps: int) -> None:
        self.cost_log.append(CostRecord(kind, steps))

    def _clone_base(self, other: "Engine") -> None:
        other.vv = self.vv
        other.local_seq = self.local_seq
        other.cost_log = list(self.cost_log)
