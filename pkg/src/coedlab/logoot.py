"""Tombstone-free sequence CRDT keyed by variable-length position identifiers.

Each document entry is keyed by a list of (digit, site, seq) triples.  The
scheme only works if identifier order always agrees with document position
order.  ``construct_ids`` implements the digit-interval allocator in two
modes: ``strict`` enforces the ordering contract and turns the known
non-termination case (left prefix value >= right prefix value, so no depth
can ever open an interval) into an ``OrderingViolation``; ``patched``
replays the workaround found in deployed code -- bump the right neighbor's
digit inside the generator and continue -- which restores availability but
can emit identifiers that break position ordering and therefore replica
consistency.
"""
from __future__ import annotations

import bisect
import random
from dataclasses import dataclass, field

from .core import (
    DELETE,
    INSERT,
    Engine,
    ExternalOp,
    OutOfBounds,
    SiteId,
    WireOp,
    apply_external,
)

DEFAULT_BASE = 1 << 16
FIG_BASE = 10  # small base used by the scripted reproductions


class OrderingViolation(Exception):
    """No identifier can be allocated between the given neighbors."""

    def __init__(self, left: "LogootId", right: "LogootId", depth: int):
        super().__init__(
            f"cannot allocate between {left} and {right}: "
            f"prefix order is inconsistent at depth {depth}"
        )
        self.left = left
        self.right = right
        self.depth = depth


class ScriptExhausted(Exception):
    """A scripted digit source ran out of values."""


class ScriptOutOfRange(Exception):
    """A scripted value does not fit the interval handed to the draw."""


@dataclass(frozen=True)
class LogootTriple:
    digit: int
    sid: int
    seq: int

    def to_json(self) -> list:
        return [self.digit, self.sid, self.seq]

    def __str__(self) -> str:
        return f"<{self.digit},{self.sid},{self.seq}>"


@dataclass(frozen=True)
class LogootId:
    triples: tuple[LogootTriple, ...]

    def key(self) -> tuple:
        return tuple((t.digit, t.sid, t.seq) for t in self.triples)

    def depth(self) -> int:
        return len(self.triples)

    def digit_at(self, k: int) -> int:
        """Digit at position k (0-based), zero-extended past the end."""
        return self.triples[k].digit if k < len(self.triples) else 0

    def to_json(self) -> list:
        return [t.to_json() for t in self.triples]

    @classmethod
    def from_json(cls, data) -> "LogootId":
        return cls(tuple(LogootTriple(*t) for t in data))

    def __str__(self) -> str:
        return "".join(str(t) for t in self.triples)


MIN_ID = LogootId((LogootTriple(0, 0, 0),))


def max_id(base: int) -> LogootId:
    # the sentinel digit equals the base, i.e. larger than any real digit
    return LogootId((LogootTriple(base, 0, 0),))


def compare_ids(a: LogootId, b: LogootId) -> int:
    """Total order: triples lexicographically, a strict prefix sorts first."""
    ka, kb = a.key(), b.key()
    if ka < kb:
        return -1
    if ka > kb:
        return 1
    return 0


def prefix_value(a: LogootId, depth: int, base: int = FIG_BASE) -> int:
    """Positional value of the first ``depth`` digits, missing digits read 0."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    value = 0
    for k in range(depth):
        value = value * base + a.digit_at(k)
    return value


def _digits_of(value: int, depth: int, base: int) -> list[int]:
    digits = []
    for _ in range(depth):
        value, d = divmod(value, base)
        digits.append(d)
    if value:
        raise ValueError(f"value does not fit in {depth} digits")
    return digits[::-1]


@dataclass
class RngScript:
    """Digit source for identifier allocation.

    ``seeded`` draws uniformly from the interval given to each batch;
    ``scripted`` consumes a fixed list of integers, which makes a run
    replayable value-for-value.
    """

    mode: str = "seeded"  # "seeded" | "scripted"
    script: list[int] = field(default_factory=list)
    seed: int = 0
    _cursor: int = 0
    _rng: random.Random | None = None

    def draw_batch(self, low: int, high: int, n: int, cap: int | None = None) -> list[int]:
        """Draw ``n`` values for the open interval (low, high).

        With ``cap`` unset the values must be strictly increasing inside the
        interval.  ``cap`` marks the relaxed patched-mode contract: each
        value only needs to fit in the current digit capacity, mirroring
        the looser arithmetic of the patched allocator.
        """
        if self.mode == "scripted":
            if self._cursor + n > len(self.script):
                raise ScriptExhausted(f"need {n} values, script has {len(self.script) - self._cursor}")
            values = self.script[self._cursor : self._cursor + n]
            self._cursor += n
            if cap is None:
                prev = low
                for v in values:
                    if not (prev < v < high):
                        raise ScriptOutOfRange(f"{v} not in ({prev}, {high})")
                    prev = v
            else:
                for v in values:
                    if not 0 <= v < cap:
                        raise ScriptOutOfRange(f"{v} not in [0, {cap})")
            return list(values)
        if self._rng is None:
            self._rng = random.Random(self.seed)
        return sorted(self._rng.sample(range(low + 1, high), n))

    def clone(self) -> "RngScript":
        other = RngScript(self.mode, list(self.script), self.seed, self._cursor)
        if self._rng is not None:
            other._rng = random.Random()
            other._rng.setstate(self._rng.getstate())
        return other


def construct_ids(
    left: LogootId,
    right: LogootId,
    n: int,
    site: SiteId,
    rng: RngScript,
    *,
    base: int = DEFAULT_BASE,
    mode: str = "strict",
    first_seq: int = 1,
) -> list[LogootId]:
    """Allocate ``n`` identifiers for the gap between ``left`` and ``right``.

    Deepens until the digit interval holds at least ``n`` values, draws the
    values, and converts each to triples: a digit equal to an existing
    digit of ``left`` (or, failing that, of the working right neighbor)
    inherits that triple's (site, seq); every other digit is stamped with
    this site and one fresh seq per generated identifier.

    In strict mode a left prefix value exceeding the right one at any depth
    proves no depth can open an interval, and the call raises
    ``OrderingViolation`` -- the detectable form of what is otherwise an
    unbounded search.  In patched mode a non-positive interval bumps the
    working right neighbor's digit at the stuck depth and the search
    continues; the identifiers that come out may sort outside the gap.
    """
    if n < 1:
        raise ValueError("need at least one identifier")
    if compare_ids(left, right) != -1:
        raise ValueError(f"neighbors are not ordered: {left} !< {right}")

    # working copy of the right neighbor; only real (or patched-in) triples
    # live here, since inheritance may copy them -- prefix values zero-extend
    # past the end on their own
    work_right = list(right.triples)
    depth = 0
    hard_cap = max(left.depth(), right.depth()) + max(2, len(str(n))) + 8
    while True:
        depth += 1
        if depth > hard_cap:
            raise OrderingViolation(left, right, depth)
        p = prefix_value(left, depth, base)
        q = prefix_value(LogootId(tuple(work_right)), depth, base)
        interval = q - p - 1
        if mode == "patched" and interval <= 0:
            while len(work_right) < depth:
                work_right.append(LogootTriple(0, 0, 0))
            t = work_right[depth - 1]
            work_right[depth - 1] = LogootTriple(t.digit + 1, t.sid, t.seq)
            q = prefix_value(LogootId(tuple(work_right)), depth, base)
            interval = q - p - 1
        if interval >= n:
            break
        if mode == "strict":
            if p > q:
                raise OrderingViolation(left, right, depth)
            if p == q and depth >= max(left.depth(), right.depth()):
                # both digit strings are exhausted and equal: the interval
                # stays at -1 forever
                raise OrderingViolation(left, right, depth)

    cap = base**depth if mode == "patched" else None
    values = rng.draw_batch(p, q, n, cap)

    out = []
    for offset, value in enumerate(values):
        seq = first_seq + offset
        triples = []
        for k, d in enumerate(_digits_of(value, depth, base)):
            if k < left.depth() and left.triples[k].digit == d:
                triples.append(left.triples[k])
            elif k < len(work_right) and work_right[k].digit == d:
                t = work_right[k]
                triples.append(LogootTriple(d, t.sid, t.seq))
            else:
                triples.append(LogootTriple(d, site, seq))
        out.append(LogootId(tuple(triples)))

    if mode == "strict":
        for ident in out:
            assert compare_ids(left, ident) == -1 and compare_ids(ident, right) == -1
    return out


@dataclass(frozen=True)
class LogootOp:
    kind: str  # "ins" | "del"
    id: LogootId
    ch: str = ""

    def __str__(self) -> str:
        if self.kind == "ins":
            return f"ins({self.ch!r},{self.id})"
        return f"del({self.id})"


class LogootDoc:
    """Ordered (identifier, character) entries; no tombstones are kept."""

    def __init__(self, base_text: str = "", *, base: int = DEFAULT_BASE, ids: list[LogootId] | None = None):
        self.base = base
        if ids is None:
            ids = default_base_ids(len(base_text), base)
        if len(ids) != len(base_text):
            raise ValueError("one identifier per base character required")
        self.entries: list[tuple[LogootId, str]] = list(zip(ids, base_text))
        self.keys: list[tuple] = [i.key() for i in ids]
        self.steps = 0

    def __len__(self) -> int:
        return len(self.entries)

    def text(self) -> str:
        return "".join(ch for _, ch in self.entries)

    def id_at(self, pos: int) -> LogootId:
        return self.entries[pos][0]

    def neighbors(self, pos: int) -> tuple[LogootId, LogootId]:
        left = self.entries[pos - 1][0] if pos > 0 else MIN_ID
        right = self.entries[pos][0] if pos < len(self.entries) else max_id(self.base)
        return left, right

    def insert_at(self, pos: int, ident: LogootId, ch: str) -> None:
        """Positional insert used on the generating site; the identifier is
        trusted to belong at this position."""
        self.entries.insert(pos, (ident, ch))
        self.keys.insert(pos, ident.key())
        self.steps += len(self.entries) - pos

    def insert_remote(self, ident: LogootId, ch: str) -> int:
        """Rank the identifier by binary search and insert; returns the rank."""
        key = ident.key()
        rank = bisect.bisect_left(self.keys, key)
        self.entries.insert(rank, (ident, ch))
        self.keys.insert(rank, key)
        self.steps += max(len(self.entries).bit_length(), 1) + (len(self.entries) - rank)
        return rank

    def delete_at(self, pos: int) -> tuple[LogootId, str]:
        ident, ch = self.entries.pop(pos)
        self.keys.pop(pos)
        self.steps += len(self.entries) - pos + 1
        return ident, ch

    def delete_remote(self, ident: LogootId) -> int | None:
        """Remove by identifier; None when absent (e.g. a concurrent delete
        of the same entry already removed it)."""
        key = ident.key()
        rank = bisect.bisect_left(self.keys, key)
        self.steps += max(len(self.entries).bit_length(), 1)
        if rank < len(self.keys) and self.keys[rank] == key:
            self.entries.pop(rank)
            self.keys.pop(rank)
            self.steps += len(self.entries) - rank + 1
            return rank
        return None

    def is_sorted(self) -> bool:
        return all(self.keys[i] < self.keys[i + 1] for i in range(len(self.keys) - 1))

    def digest(self) -> tuple:
        return tuple((k, ch) for k, (_, ch) in zip(self.keys, self.entries))

    def id_stats(self) -> dict:
        """Identifier depth statistics and the modeled byte footprint."""
        depths = [ident.depth() for ident, _ in self.entries]
        digit_bytes = ((self.base - 1).bit_length() + 7) // 8
        triple_bytes = digit_bytes + 8
        return {
            "entries": len(depths),
            "max_depth": max(depths) if depths else 0,
            "mean_depth": (sum(depths) / len(depths)) if depths else 0.0,
            "modeled_bytes": sum(depths) * triple_bytes,
        }

    def clone(self) -> "LogootDoc":
        other = LogootDoc.__new__(LogootDoc)
        other.base = self.base
        other.entries = list(self.entries)
        other.keys = list(self.keys)
        other.steps = self.steps
        return other


def default_base_ids(n: int, base: int) -> list[LogootId]:
    """Evenly spaced single-triple identifiers for a shared base document."""
    if n == 0:
        return []
    if n >= base - 1:
        raise ValueError(f"{n} base characters do not fit single digits in base {base}")
    step = base // (n + 1)
    return [LogootId((LogootTriple(step * (k + 1), 0, k + 1),)) for k in range(n)]


def synthesize_doc(n: int, base: int = DEFAULT_BASE) -> LogootDoc:
    """Large ordered document built directly, for benchmarks."""
    span = base - 2
    ids = []
    for k in range(n):
        hi, lo = divmod(k, span)
        ids.append(LogootId((LogootTriple(hi + 1, 0, k + 1), LogootTriple(lo + 1, 0, k + 1))))
    doc = LogootDoc.__new__(LogootDoc)
    doc.base = base
    doc.entries = [(ident, "x") for ident in ids]
    doc.keys = [ident.key() for ident in ids]
    doc.steps = 0
    return doc


class LogootSite(Engine):
    """Engine wrapper around a tombstone-free document.

    ``mode`` selects the identifier allocator: strict raises on the
    inconsistent-prefix case, patched reproduces the deployed workaround.
    ``sorted_violations`` records every integration after which the entry
    list stopped agreeing with identifier order -- the observable core of
    the position-order defect.
    """

    def __init__(
        self,
        site: SiteId,
        base_text: str = "",
        *,
        base: int = DEFAULT_BASE,
        mode: str = "strict",
        rng: RngScript | None = None,
        init_ids: list[LogootId] | None = None,
        init_seq: int = 0,
        verify_sorted: bool = True,
    ):
        super().__init__(site)
        self.doc = LogootDoc(base_text, base=base, ids=init_ids)
        self.state = base_text
        self.mode = mode
        self.rng = rng or RngScript()
        self.id_seq = init_seq
        self.verify_sorted = verify_sorted
        self.sorted_violations: list[str] = []

    def snapshot(self) -> str:
        return self.state

    def internal_digest(self):
        return self.doc.digest()

    def _sorted_check(self, context: str) -> None:
        if self.verify_sorted and not self.doc.is_sorted():
            self.sorted_violations.append(context)

    def local_run(self, pos: int, text: str) -> list[WireOp]:
        """Insert a run of characters with one allocator call for the run.

        Entries land in the document by position -- the identifiers are not
        consulted on the generating site, which is exactly why a
        position-order violation stays invisible until remote replay.
        """
        if not 0 <= pos <= len(self.doc):
            raise OutOfBounds(f"insert at {pos} on length {len(self.doc)}")
        before = self.doc.steps
        left, right = self.doc.neighbors(pos)
        ids = construct_ids(
            left,
            right,
            len(text),
            self.site,
            self.rng,
            base=self.doc.base,
            mode=self.mode,
            first_seq=self.id_seq + 1,
        )
        self.id_seq += len(text)
        wires = []
        for i, (ident, ch) in enumerate(zip(ids, text)):
            self.doc.insert_at(pos + i, ident, ch)
            self.state = apply_external(self.state, ExternalOp.insert(pos + i, ch))
            wires.append(self._next_wire(LogootOp("ins", ident, ch)))
        self._sorted_check(f"local insert at {pos} on site {self.site}")
        self._charge("local", max(self.doc.steps - before, 1))
        return wires

    def local(self, op: ExternalOp) -> WireOp:
        if op.kind == INSERT:
            return self.local_run(op.pos, op.ch)[0]
        if op.kind != DELETE:
            raise ValueError("identity ops are not generated by users")
        if not 0 <= op.pos < len(self.doc):
            raise OutOfBounds(f"delete at {op.pos} on length {len(self.doc)}")
        before = self.doc.steps
        ident, _ = self.doc.delete_at(op.pos)
        self.state = apply_external(self.state, op)
        self._charge("local", max(self.doc.steps - before, 1))
        return self._next_wire(LogootOp("del", ident))

    def remote(self, wire: WireOp) -> ExternalOp:
        op: LogootOp = wire.payload
        before = self.doc.steps
        if op.kind == "ins":
            rank = self.doc.insert_remote(op.id, op.ch)
            eo = ExternalOp.insert(rank, op.ch)
        else:
            rank = self.doc.delete_remote(op.id)
            eo = ExternalOp.delete(rank) if rank is not None else ExternalOp.identity()
        self.state = apply_external(self.state, eo)
        self.vv = self.vv.merge(wire.vv)
        self._sorted_check(f"remote {op} on site {self.site}")
        self._charge("remote", max(self.doc.steps - before, 1))
        return eo

    def clone(self) -> "LogootSite":
        other = LogootSite.__new__(LogootSite)
        Engine.__init__(other, self.site)
        self._clone_base(other)
        other.doc = self.doc.clone()
        other.state = self.state
        other.mode = self.mode
        other.rng = self.rng.clone()
        other.id_seq = self.id_seq
        other.verify_sorted = self.verify_sorted
        other.sorted_violations = list(self.sorted_violations)
        return other
