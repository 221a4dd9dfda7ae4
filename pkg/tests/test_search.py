import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from astsim import corpus as C
from astsim import nn, search
from astsim.ast_core import AstNode, FunctionAst, node_count

import oracles

N = AstNode
VAR = N("var")
NUM = N("num")


def fn(name, root, arch="arch0", callees=()):
    return FunctionAst(name=name, origin="t", arch=arch, root=root, callees=callees)


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------


class TestCalibration:
    def test_callee_count(self):
        ast = fn("f", VAR, callees=(("a", 12), ("b", 5), ("c", 4), ("d", 0)))
        assert search.callee_count(ast) == 2  # beta defaults to 5
        assert search.callee_count(ast, beta=1) == 3
        assert search.callee_count(ast, beta=0) == 4
        assert search.callee_count(ast, beta=13) == 0

    def test_agreement_is_exactly_one(self):
        for c in range(0, 51):
            assert search.calibrate(c, c) == 1.0

    def test_exponential_decay(self):
        assert search.calibrate(3, 5) == pytest.approx(math.exp(-2), abs=1e-15)
        assert search.calibrate(5, 3) == search.calibrate(3, 5)
        assert 0.0 < search.calibrate(0, 50) < 1e-20

    def test_strictly_decreasing_in_gap(self):
        values = [search.calibrate(0, gap) for gap in range(0, 30)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_final_score_caps_at_model_score(self):
        for m in (0.0, 0.3, 0.99):
            for s in (1.0, 0.5, 0.01):
                f = search.final_score(m, s)
                assert f <= m
                assert f == pytest.approx(m * s, abs=1e-15)

    def test_defaults(self):
        assert search.INLINE_BETA == 5
        assert search.DECISION_THRESHOLD == 0.84


# ---------------------------------------------------------------------------
# Encoding databases
# ---------------------------------------------------------------------------


def small_corpus(n=6, seed=0):
    return C.generate_corpus(n, 2, seed=seed)


class TestEncodingDb:
    def test_encode_corpus_order_and_metadata(self):
        params = nn.init_params(d_e=4, n=6, seed=0)
        asts = small_corpus()
        db = search.encode_corpus(asts, params, beta=3)
        assert db.n == 6 and db.beta == 3
        assert db.ckpt == nn.params_fingerprint(params)
        assert [(r.name, r.arch) for r in db.records] == [(a.name, a.arch) for a in asts]
        for rec, ast in zip(db.records, asts):
            assert rec.c == search.callee_count(ast, 3)
            assert rec.v.shape == (6,)

    def test_parallel_encoding_is_bit_identical(self):
        params = nn.init_params(d_e=4, n=6, seed=1)
        asts = small_corpus(8, seed=2)
        base = search.encode_corpus(asts, params)
        for jobs in (2, 3):
            got = search.encode_corpus(asts, params, jobs=jobs)
            assert len(got.records) == len(base.records)
            for a, b in zip(base.records, got.records):
                assert a.name == b.name
                np.testing.assert_array_equal(a.v, b.v)

    def test_save_load_round_trip(self, tmp_path):
        params = nn.init_params(d_e=4, n=6, seed=0)
        db = search.encode_corpus(small_corpus(), params)
        path = tmp_path / "corpus.encdb"
        search.save_db(path, db)
        again = search.load_db(path)
        assert (again.ckpt, again.n, again.beta) == (db.ckpt, db.n, db.beta)
        assert len(again.records) == len(db.records)
        for a, b in zip(db.records, again.records):
            assert (a.name, a.origin, a.arch, a.c) == (b.name, b.origin, b.arch, b.c)
            np.testing.assert_array_equal(a.v, b.v)

    def test_load_rejects_wrong_width(self, tmp_path):
        params = nn.init_params(d_e=4, n=6, seed=0)
        db = search.encode_corpus(small_corpus(), params)
        path = tmp_path / "corpus.encdb"
        search.save_db(path, db)
        lines = path.read_text().splitlines()
        lines[0] = lines[0].replace('"n":6', '"n":7')
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(search.DbError, match="width"):
            search.load_db(path)

    def test_load_rejects_foreign_files(self, tmp_path):
        path = tmp_path / "corpus.encdb"
        path.write_text('{"something": "else"}\n')
        with pytest.raises(search.DbError, match="encdb-v1"):
            search.load_db(path)
        path.write_text("not json\n")
        with pytest.raises(search.DbError, match="header"):
            search.load_db(path)


# ---------------------------------------------------------------------------
# Ranked search
# ---------------------------------------------------------------------------


class TestRankSearch:
    def setup_db(self, seed=0, n_asts=10):
        params = nn.init_params(d_e=4, n=6, seed=seed)
        asts = small_corpus(n_asts, seed=seed)
        db = search.encode_corpus(asts, params)
        return params, asts, db

    def test_matches_brute_force(self):
        params, _, db = self.setup_db()
        query = db.records[0]
        hits = search.rank_search(query, db, params, threshold=0.0)
        assert len(hits) == len(db.records)
        by_key = {(h.name, h.origin, h.arch): h for h in hits}
        for rec in db.records:
            from astsim.siamese import similarity

            m = similarity(query.v, rec.v, params).sim
            s = search.calibrate(query.c, rec.c)
            hit = by_key[(rec.name, rec.origin, rec.arch)]
            assert hit.m == m and hit.s == s and hit.f == m * s

    def test_sorted_best_first_with_stable_ties(self):
        params, _, db = self.setup_db()
        hits = search.rank_search(db.records[0], db, params, threshold=0.0)
        keys = [(-h.f, h.name, h.origin, h.arch) for h in hits]
        assert keys == sorted(keys)

    def test_threshold_filters(self):
        params, _, db = self.setup_db()
        all_hits = search.rank_search(db.records[0], db, params, threshold=0.0)
        cut = all_hits[len(all_hits) // 2].f
        kept = search.rank_search(db.records[0], db, params, threshold=cut)
        assert all(h.f >= cut for h in kept)
        assert len(kept) == sum(1 for h in all_hits if h.f >= cut)

    def test_top_k(self):
        params, _, db = self.setup_db()
        full = search.rank_search(db.records[0], db, params, threshold=0.0)
        assert search.rank_search(db.records[0], db, params, threshold=0.0, top_k=3) == full[:3]

    def test_jobs_bit_identical(self):
        params, _, db = self.setup_db(seed=3)
        base = search.rank_search(db.records[1], db, params, threshold=0.0)
        for jobs in (2, 4):
            assert search.rank_search(db.records[1], db, params, threshold=0.0, jobs=jobs) == base

    def test_checkpoint_mismatch_rejected(self):
        params, _, db = self.setup_db()
        other = nn.init_params(d_e=4, n=6, seed=99)
        with pytest.raises(search.DbError, match="checkpoint"):
            search.rank_search(db.records[0], db, other)

    def test_score_pairs_parallel_lists(self):
        params = nn.init_params(d_e=4, n=6, seed=0)
        pairs = C.build_pairs(small_corpus(), seed=0)
        m, f, labels = search.score_pairs(pairs, params)
        assert len(m) == len(f) == len(labels) == len(pairs)
        for mk, fk, pk in zip(m, f, pairs):
            assert fk == pytest.approx(mk * search.calibrate(pk.c1, pk.c2), abs=1e-15)
        assert set(labels) == {1, -1}


# ---------------------------------------------------------------------------
# Prime-product baseline
# ---------------------------------------------------------------------------


class TestPrimeBaseline:
    def test_prime_table(self):
        assert len(search._PRIMES) == 43
        assert search._PRIMES[0] == 2 and search._PRIMES[-1] == 191
        for p in search._PRIMES:
            assert all(p % q for q in range(2, p))

    def test_product_is_label_multiset_invariant(self):
        # same kinds, different shapes -> same product
        a = N("block", (N("if", (VAR,)), NUM))
        b = N("if", (N("block", (NUM,)), VAR))
        assert search.prime_product(a) == search.prime_product(b)

    def test_hand_computed_product(self):
        # block=2 -> prime 3; var=39 -> 167; num=40 -> 173
        t = N("block", (VAR, NUM))
        assert search.prime_product(t) == 3 * 167 * 173

    def test_structure_blindness_vs_distance(self):
        # the hash cannot distinguish these, edit distance can
        a = N("if", (N("lt", (VAR, NUM)), N("return", (VAR,))))
        b = N("if", (N("lt", (VAR, VAR)), N("return", (NUM,))))
        assert search.prime_product(a) == search.prime_product(b)
        assert search.tree_edit_distance(a, b) > 0

    def test_similarity_bounds_and_symmetry(self):
        rng = random.Random(0)
        for _ in range(50):
            a = oracles.rand_ast(rng, 20)
            b = oracles.rand_ast(rng, 20)
            s = search.prime_similarity(a, b)
            assert 0.0 <= s <= 1.0
            assert s == search.prime_similarity(b, a)
        assert search.prime_similarity(a, a) == 1.0

    def test_hand_computed_dice(self):
        a = N("block", (VAR, VAR, NUM))  # {block:1, var:2, num:1}
        b = N("block", (VAR, N("str")))  # {block:1, var:1, str:1}
        # common = 1 + 1 = 2, total = 4 + 3
        assert search.prime_similarity(a, b) == pytest.approx(4 / 7, abs=1e-15)

    def test_accepts_function_asts(self):
        a = fn("f", N("block", (VAR, NUM)))
        assert search.prime_similarity(a, a) == 1.0


# ---------------------------------------------------------------------------
# Tree edit distance baseline
# ---------------------------------------------------------------------------


class TestTreeEditDistance:
    def test_identical_trees(self):
        t = N("if", (N("lt", (VAR, NUM)), N("block", (N("return", (VAR,)),))))
        assert search.tree_edit_distance(t, t) == 0
        assert search.tree_edit_similarity(t, t) == 1.0

    def test_accepts_function_asts(self):
        t = N("if", (VAR, NUM))
        assert search.tree_edit_distance(fn("f", t), fn("g", t)) == 0
        assert search.tree_edit_similarity(fn("f", t), t) == 1.0

    def test_single_relabel(self):
        a = N("if", (VAR, NUM))
        b = N("while", (VAR, NUM))
        assert search.tree_edit_distance(a, b) == 1

    def test_single_insert(self):
        a = N("block", (VAR,))
        b = N("block", (VAR, NUM))
        assert search.tree_edit_distance(a, b) == 1

    def test_leaf_vs_chain(self):
        a = VAR
        b = N("not", (N("not", (VAR,)),))
        assert search.tree_edit_distance(a, b) == 2

    def test_completely_different(self):
        a = N("var")
        b = N("num")
        assert search.tree_edit_distance(a, b) == 1

    def test_matches_forest_recurrence_oracle(self):
        rng = random.Random(4)
        for _ in range(200):
            a = oracles.rand_ast(rng, 8)
            b = oracles.rand_ast(rng, 8)
            got = search.tree_edit_distance(a, b)
            want = oracles.ted_reference(a, b)
            assert got == want, f"{a} vs {b}: {got} != {want}"

    def test_metric_properties(self):
        rng = random.Random(9)
        trees = [oracles.rand_ast(rng, 10) for _ in range(8)]
        for a in trees:
            assert search.tree_edit_distance(a, a) == 0
            for b in trees:
                dab = search.tree_edit_distance(a, b)
                assert dab == search.tree_edit_distance(b, a)
                for c in trees:
                    assert dab <= search.tree_edit_distance(a, c) + search.tree_edit_distance(c, b)

    def test_distance_bounded_by_node_sum(self):
        rng = random.Random(2)
        for _ in range(50):
            a = oracles.rand_ast(rng, 12)
            b = oracles.rand_ast(rng, 12)
            d = search.tree_edit_distance(a, b)
            assert 0 <= d <= node_count(a) + node_count(b)
            sim = search.tree_edit_similarity(a, b)
            assert 0.0 <= sim <= 1.0

    def test_aliased_subtrees(self):
        shared = N("add", (VAR, NUM))
        a = N("block", (shared, shared))
        b = N("block", (N("add", (VAR, NUM)), N("add", (VAR, NUM))))
        assert search.tree_edit_distance(a, b) == 0

    def test_size_cap(self):
        wide = N("block", tuple(VAR for _ in range(301)))
        with pytest.raises(search.SizeCapError, match="300"):
            search.tree_edit_distance(wide, VAR)
        with pytest.raises(search.SizeCapError):
            search.tree_edit_distance(VAR, wide)
        # a custom cap loosens the refusal
        assert search.tree_edit_distance(wide, VAR, cap=302) == 301

    @given(st.data())
    @settings(max_examples=50, deadline=None)
    def test_unit_cost_lower_bound(self, data):
        # distance at least the difference in node counts
        seed = data.draw(st.integers(0, 10**6))
        rng = random.Random(seed)
        a = oracles.rand_ast(rng, 10)
        b = oracles.rand_ast(rng, 10)
        assert search.tree_edit_distance(a, b) >= abs(node_count(a) - node_count(b))
