import pytest
from hypothesis import given, settings, strategies as st

from coedlab.core import ExternalOp
from coedlab.logoot import (
    DEFAULT_BASE,
    MIN_ID,
    LogootDoc,
    LogootId,
    LogootOp,
    LogootSite,
    LogootTriple,
    OrderingViolation,
    RngScript,
    ScriptExhausted,
    ScriptOutOfRange,
    compare_ids,
    construct_ids,
    default_base_ids,
    max_id,
    prefix_value,
    synthesize_doc,
)


def lid(*triples):
    return LogootId(tuple(LogootTriple(*t) for t in triples))


# the identifier quartet from the scripted two-site session
LEFT_X = lid((1, 1, 1))
RIGHT_Y = lid((3, 1, 2))
ID_B = lid((2, 1, 4), (8, 1, 4))
ID_BB = lid((2, 2, 2), (0, 2, 2))


class TestCompareIds:
    def test_single_triples(self):
        assert compare_ids(LEFT_X, RIGHT_Y) == -1

    def test_site_order_beats_deeper_digits(self):
        # positional order disagrees with the prefix integers (28 vs 20)
        assert compare_ids(ID_B, ID_BB) == -1
        assert prefix_value(ID_B, 2) == 28
        assert prefix_value(ID_BB, 2) == 20

    def test_equal(self):
        assert compare_ids(ID_B, ID_B) == 0

    def test_prefix_sorts_first(self):
        assert compare_ids(lid((2, 1, 4)), ID_B) == -1

    def test_sentinels_bracket_everything(self):
        top = max_id(10)
        for ident in (LEFT_X, RIGHT_Y, ID_B, ID_BB):
            assert compare_ids(MIN_ID, ident) == -1
            assert compare_ids(ident, top) == -1

    ids = st.lists(
        st.tuples(st.integers(0, 9), st.integers(1, 3), st.integers(1, 5)),
        min_size=1,
        max_size=3,
    ).map(lambda ts: lid(*ts))

    @given(ids, ids)
    def test_antisymmetric(self, a, b):
        assert compare_ids(a, b) == -compare_ids(b, a)

    @given(ids, ids, ids)
    def test_transitive(self, a, b, c):
        if compare_ids(a, b) == -1 and compare_ids(b, c) == -1:
            assert compare_ids(a, c) == -1


class TestPrefixValue:
    def test_depth_two(self):
        assert prefix_value(ID_B, 2) == 28
        assert prefix_value(ID_BB, 2) == 20

    def test_zero_extension(self):
        assert prefix_value(LEFT_X, 3) == 100

    def test_depth_one(self):
        assert prefix_value(ID_B, 1) == 2


class TestConstructIds:
    def test_scripted_site_one(self):
        ids = construct_ids(
            LEFT_X, RIGHT_Y, 2, 1, RngScript("scripted", [19, 28]), base=10, first_seq=3
        )
        assert ids == [lid((1, 1, 1), (9, 1, 3)), lid((2, 1, 4), (8, 1, 4))]

    def test_scripted_site_two(self):
        ids = construct_ids(
            LEFT_X, RIGHT_Y, 2, 2, RngScript("scripted", [19, 20]), base=10, first_seq=1
        )
        assert ids == [lid((1, 1, 1), (9, 2, 1)), lid((2, 2, 2), (0, 2, 2))]

    def test_strict_raises_on_inverted_prefixes(self):
        with pytest.raises(OrderingViolation) as exc:
            construct_ids(ID_B, ID_BB, 2, 1, RngScript("seeded", seed=1), base=10)
        assert exc.value.depth == 2

    def test_strict_raises_when_digit_strings_exhaust_equal(self):
        with pytest.raises(OrderingViolation):
            construct_ids(
                lid((2, 1, 4)), lid((2, 2, 2)), 1, 1, RngScript("seeded", seed=1), base=10
            )

    def test_patched_reproduces_the_workaround_ids(self):
        ids = construct_ids(
            ID_B,
            ID_BB,
            2,
            1,
            RngScript("scripted", [289, 204]),
            base=10,
            mode="patched",
            first_seq=5,
        )
        assert ids == [
            lid((2, 1, 4), (8, 1, 4), (9, 1, 5)),
            lid((2, 1, 4), (0, 2, 2), (4, 1, 6)),
        ]
        # the second identifier sorts before the left neighbor: the
        # position-order contract is broken
        assert compare_ids(ids[1], ID_B) == -1

    def test_script_validation(self):
        with pytest.raises(ScriptOutOfRange):
            construct_ids(LEFT_X, RIGHT_Y, 2, 1, RngScript("scripted", [19, 19]), base=10)
        with pytest.raises(ScriptOutOfRange):
            construct_ids(LEFT_X, RIGHT_Y, 1, 1, RngScript("scripted", [99]), base=10)
        with pytest.raises(ScriptExhausted):
            construct_ids(LEFT_X, RIGHT_Y, 2, 1, RngScript("scripted", [19]), base=10)

    def test_unordered_neighbors_rejected(self):
        with pytest.raises(ValueError):
            construct_ids(RIGHT_Y, LEFT_X, 1, 1, RngScript("seeded", seed=1), base=10)

    ids = st.lists(
        st.tuples(st.integers(0, 9), st.integers(1, 3), st.integers(1, 5)),
        min_size=1,
        max_size=3,
    ).map(lambda ts: lid(*ts))

    @settings(max_examples=300)
    @given(ids, ids, st.integers(1, 9), st.integers(0, 1 << 30))
    def test_strict_ids_lie_between_or_detectably_fail(self, a, b, n, seed):
        order = compare_ids(a, b)
        if order == 0:
            return
        left, right = (a, b) if order == -1 else (b, a)
        try:
            out = construct_ids(left, right, n, 2, RngScript("seeded", seed=seed), base=10)
        except OrderingViolation as exc:
            # detection is bounded: no deeper interval can ever open
            assert exc.depth <= max(left.depth(), right.depth()) + 1
            return
        assert len(out) == n
        for ident in out:
            assert compare_ids(left, ident) == -1
            assert compare_ids(ident, right) == -1
        for x, y in zip(out, out[1:]):
            assert compare_ids(x, y) == -1
        assert all(i.depth() <= max(left.depth(), right.depth()) + 1 for i in out)


class TestDoc:
    def test_default_base_ids_are_ordered(self):
        ids = default_base_ids(5, 10)
        for a, b in zip(ids, ids[1:]):
            assert compare_ids(a, b) == -1

    def test_base_doc_too_long_for_base(self):
        with pytest.raises(ValueError):
            default_base_ids(9, 10)

    def test_synthesized_doc_sorted(self):
        doc = synthesize_doc(500, DEFAULT_BASE)
        assert doc.is_sorted()
        assert len(doc) == 500

    def test_local_delete_removes_entry(self):
        doc = LogootDoc("XY", base=10, ids=[LEFT_X, RIGHT_Y])
        ident, ch = doc.delete_at(0)
        assert (ident, ch) == (LEFT_X, "X")
        assert doc.text() == "Y"

    def test_remote_insert_ranks_by_id(self):
        doc = LogootDoc("XY", base=10, ids=[LEFT_X, RIGHT_Y])
        rank = doc.insert_remote(lid((2, 5, 1)), "m")
        assert rank == 1
        assert doc.text() == "XmY"

    def test_remote_delete_absent_id_is_none(self):
        doc = LogootDoc("X", base=10, ids=[LEFT_X])
        assert doc.delete_remote(lid((7, 7, 7))) is None
        assert doc.text() == "X"

    def test_id_stats(self):
        doc = LogootDoc("XY", base=10, ids=[LEFT_X, RIGHT_Y])
        stats = doc.id_stats()
        assert stats == {
            "entries": 2,
            "max_depth": 1,
            "mean_depth": 1.0,
            "modeled_bytes": 2 * 9,  # 1-byte digit + 4-byte site + 4-byte seq
        }
        empty = LogootDoc("", base=10)
        assert empty.id_stats()["modeled_bytes"] == 0
        assert empty.id_stats()["max_depth"] == 0


class TestSite:
    def _pair(self, mode="strict"):
        mk = lambda s, script: LogootSite(
            s, "XY", base=10, mode=mode, rng=RngScript("scripted", script),
            init_ids=[LEFT_X, RIGHT_Y], init_seq=2 if s == 1 else 0,
        )
        return mk(1, [19, 28]), mk(2, [19, 20])

    def test_concurrent_runs_interleave(self):
        a, b = self._pair()
        wa = a.local_run(1, "ab")
        wb = b.local_run(1, "AB")
        for w in wb:
            a.remote(w)
        for w in wa:
            b.remote(w)
        assert a.snapshot() == b.snapshot() == "XaAbBY"
        assert a.internal_digest() == b.internal_digest()

    def test_remote_insert_returns_rank_op(self):
        a, _ = self._pair()
        b = LogootSite(2, "XY", base=10, rng=RngScript("scripted", [2]),
                       init_ids=[LEFT_X, RIGHT_Y])
        (w,) = b.local_run(1, "A")
        applied = a.remote(w)
        assert applied == ExternalOp.insert(1, "A")

    def test_delete_round_trip(self):
        a, b = self._pair()
        w = a.local(ExternalOp.delete(0))
        assert a.snapshot() == "Y"
        assert b.remote(w) == ExternalOp.delete(0)
        assert b.snapshot() == "Y"
        assert a.internal_digest() == b.internal_digest()

    def test_concurrent_duplicate_delete_is_identity(self):
        a, b = self._pair()
        wa = a.local(ExternalOp.delete(0))
        wb = b.local(ExternalOp.delete(0))
        assert a.remote(wb) == ExternalOp.identity()
        assert b.remote(wa) == ExternalOp.identity()
        assert a.snapshot() == b.snapshot() == "Y"

    def test_empty_doc_roundtrip(self):
        a = LogootSite(1, "", base=10, rng=RngScript("seeded", seed=3))
        b = LogootSite(2, "", base=10, rng=RngScript("seeded", seed=4))
        w = a.local(ExternalOp.insert(0, "q"))
        assert b.remote(w) == ExternalOp.insert(0, "q")
        assert b.snapshot() == "q"

    def test_strict_local_ops_keep_doc_sorted(self):
        site = LogootSite(1, "XY", base=10, rng=RngScript("seeded", seed=9),
                          init_ids=[LEFT_X, RIGHT_Y], init_seq=2)
        import random

        rnd = random.Random(1)
        for k in range(30):
            if len(site.doc) and rnd.random() < 0.3:
                site.local(ExternalOp.delete(rnd.randrange(len(site.doc))))
            else:
                try:
                    site.local(ExternalOp.insert(rnd.randint(0, len(site.doc)), chr(97 + k % 26)))
                except OrderingViolation:
                    pass  # single-site histories can exhaust base-10 digit room
            assert site.doc.is_sorted()
        assert site.sorted_violations == []

    def test_head_insert_workload_grows_depth(self):
        site = LogootSite(1, "", base=10, rng=RngScript("seeded", seed=5))
        depths = []
        for k in range(40):
            site.local(ExternalOp.insert(0, chr(97 + k % 26)))
            depths.append(site.doc.id_stats()["max_depth"])
        assert depths == sorted(depths)  # monotone growth
        assert depths[-1] > depths[0]
