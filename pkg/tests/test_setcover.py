"""Set-cover explanation engine: exact solvers against brute force, the
greedy warm start, verification, the rule database, and the cascade."""

import itertools

import numpy as np
import pytest

from armkit import (
    DatasetIndex,
    DbEntry,
    ExplainContext,
    ExplanationDb,
    InfeasibleExplanation,
    InfeasibleSparsityCap,
    OutlierError,
    Rule,
    SolverBudget,
    build_context,
    build_explanation_db,
    explain,
    four_setting_rules,
    greedy_cover,
    pattern_key,
    solve_max_sparsity,
    solve_max_support,
    verify_rule,
)


def make_index(bits, labels):
    return DatasetIndex(np.asarray(bits, dtype=np.uint8),
                        np.asarray(labels, dtype=np.int8))


def brute_force_min_sparsity(bits, labels, x_bits, y_e):
    """Smallest candidate subset excluding every opposite-label row."""
    bits = np.asarray(bits)
    cands = [c for c in range(bits.shape[1]) if x_bits[c]]
    opp = np.nonzero(np.asarray(labels) != y_e)[0]
    for size in range(len(cands) + 1):
        for sel in itertools.combinations(cands, size):
            if all(any(bits[i, c] == 0 for c in sel) for i in opp):
                return size
    return None


def brute_force_max_support(bits, labels, x_bits, y_e, cap):
    """Largest satisfying-row count over feasible subsets of at most cap."""
    bits = np.asarray(bits)
    cands = [c for c in range(bits.shape[1]) if x_bits[c]]
    opp = np.nonzero(np.asarray(labels) != y_e)[0]
    best = None
    for size in range(cap + 1):
        for sel in itertools.combinations(cands, size):
            if not all(any(bits[i, c] == 0 for c in sel) for i in opp):
                continue
            support = int(np.all(bits[:, list(sel)] == 1, axis=1).sum())
            if best is None or support > best:
                best = support
    return best


def random_instance(rng, n_rows, n_cols):
    """Random bit matrix and labels; the query pattern is all ones so every
    column is a candidate."""
    marginals = rng.uniform(0.2, 0.9, size=n_cols)
    bits = (rng.random((n_rows, n_cols)) < marginals).astype(np.uint8)
    labels = rng.integers(0, 2, size=n_rows).astype(np.int8)
    x_bits = np.ones(n_cols, dtype=np.uint8)
    return bits, labels, x_bits


class TestHandInstances:
    def _two_row_ctx(self):
        # Columns A, B, C; opposite rows (0,1,1) and (1,0,1). A excludes the
        # first, B the second, C excludes neither.
        bits = [
            [0, 1, 1],
            [1, 0, 1],
            [1, 1, 1],
            [1, 1, 1],
        ]
        labels = [0, 0, 1, 1]
        index = make_index(bits, labels)
        return build_context([1, 1, 1], index, 1)

    def test_optimal_pair(self):
        rule = solve_max_sparsity(self._two_row_ctx())
        assert rule.sparsity == 2
        assert set(rule.features) == {0, 1}
        assert rule.support == 2
        assert rule.exact

    def test_greedy_matches_on_disjoint_instance(self):
        ctx = self._two_row_ctx()
        assert greedy_cover(ctx).sparsity == solve_max_sparsity(ctx).sparsity

    def test_greedy_suboptimal_classic(self):
        # Six opposite rows; a bait column excludes four of them, two other
        # columns exclude three each and together cover all six. Greedy takes
        # the bait and needs three picks, the exact solver needs two.
        bait = [0, 0, 0, 0, 1, 1]
        odd = [0, 1, 0, 1, 0, 1]
        even = [1, 0, 1, 0, 1, 0]
        bits = np.stack([bait, odd, even], axis=1).astype(np.uint8)
        bits = np.vstack([bits, np.ones((2, 3), dtype=np.uint8)])
        labels = [0] * 6 + [1] * 2
        ctx = build_context([1, 1, 1], make_index(bits, labels), 1)
        assert greedy_cover(ctx).sparsity == 3
        exact = solve_max_sparsity(ctx)
        assert exact.sparsity == 2
        assert set(exact.features) == {1, 2}

    def test_empty_opposite_set_gives_empty_rule(self):
        bits = np.ones((5, 3), dtype=np.uint8)
        ctx = build_context([1, 1, 1], make_index(bits, [1] * 5), 1)
        rule = solve_max_sparsity(ctx)
        assert rule.features == ()
        assert rule.support == 5
        assert solve_max_support(ctx, 2).features == ()

    def test_identical_opposite_row_is_infeasible(self):
        bits = [[1, 1], [1, 1]]
        with pytest.raises(InfeasibleExplanation):
            build_context([1, 1], make_index(bits, [1, 0]), 1)

    def test_sparsity_cap_below_minimum_raises(self):
        ctx = self._two_row_ctx()
        with pytest.raises(InfeasibleSparsityCap):
            solve_max_support(ctx, 1)


class TestBruteForceParity:
    def test_sparsity_and_support_match_enumeration(self):
        rng = np.random.default_rng(12)
        checked = 0
        for _ in range(120):
            bits, labels, x_bits = random_instance(
                rng, int(rng.integers(8, 40)), int(rng.integers(3, 9)))
            try:
                ctx = build_context(x_bits, make_index(bits, labels), 1)
            except InfeasibleExplanation:
                assert brute_force_min_sparsity(bits, labels, x_bits, 1) is None
                continue
            rule = solve_max_sparsity(ctx)
            assert rule.exact
            assert rule.sparsity == brute_force_min_sparsity(bits, labels, x_bits, 1)
            v = verify_rule(rule, ctx.index)
            assert v.consistent and v.support == rule.support
            for relax in (0, 1):
                cap = rule.sparsity + relax
                wide = solve_max_support(ctx, cap)
                assert wide.exact
                oracle = brute_force_max_support(bits, labels, x_bits, 1, cap)
                assert wide.support == oracle
                assert wide.sparsity <= cap
                assert verify_rule(wide, ctx.index).consistent
            checked += 1
        assert checked >= 50

    def test_greedy_never_beats_exact(self):
        rng = np.random.default_rng(77)
        for _ in range(30):
            bits, labels, x_bits = random_instance(rng, 30, 6)
            try:
                ctx = build_context(x_bits, make_index(bits, labels), 0)
            except InfeasibleExplanation:
                continue
            assert greedy_cover(ctx).sparsity >= solve_max_sparsity(ctx).sparsity


class TestRelaxation:
    def test_support_monotone_in_relaxation(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            bits, labels, x_bits = random_instance(rng, 50, 8)
            try:
                ctx = build_context(x_bits, make_index(bits, labels), 1)
            except InfeasibleExplanation:
                continue
            rules = four_setting_rules(ctx)
            sup = [rules[f"support+{k}"].support for k in range(3)]
            assert sup[0] <= sup[1] <= sup[2]
            assert rules["support+0"].sparsity <= rules["max_sparsity"].sparsity

    def test_budget_truncation_keeps_verified_incumbent(self):
        rng = np.random.default_rng(9)
        bits, labels, x_bits = random_instance(rng, 120, 14)
        ctx = build_context(x_bits, make_index(bits, labels), 1)
        tight = SolverBudget(node_limit=1)
        rule = solve_max_sparsity(ctx, tight)
        assert not rule.exact
        assert rule.lower_bound is not None
        assert rule.lower_bound <= rule.sparsity
        assert verify_rule(rule, ctx.index).consistent
        wide = solve_max_support(ctx, rule.sparsity + 1, tight, warm_rule=rule)
        assert verify_rule(wide, ctx.index).consistent
        assert wide.support >= rule.support


class TestVerification:
    def test_corrupted_rule_yields_counterexamples(self):
        bits = [[1, 1], [0, 1], [1, 1]]
        index = make_index(bits, [1, 0, 1])
        good = Rule((0,), 1, 2)
        assert verify_rule(good, index).consistent
        bad = Rule((1,), 1, 3)
        v = verify_rule(bad, index)
        assert not v.consistent
        assert v.counterexamples == [1]
        assert v.support == 3

    def test_support_recomputed_not_trusted(self):
        bits = [[1, 1], [0, 1], [1, 1]]
        index = make_index(bits, [1, 0, 1])
        stale = Rule((0,), 1, 999)
        assert verify_rule(stale, index).support == 2


class TestRender:
    def test_render_uses_display_names(self, rng_model):
        model = rng_model
        rule = Rule((0, 1), 1, 42)
        text = rule.render(model.binarizer)
        assert " AND " in text
        assert "high risk" in text
        assert "supported by 42 prior cases" in text

    def test_render_empty_rule(self, rng_model):
        text = Rule((), 0, 7).render(rng_model.binarizer)
        assert "low risk" in text
        assert "(no conditions)" in text


@pytest.fixture
def rng_model():
    from conftest import random_model
    return random_model(np.random.default_rng(3))


class TestExplanationDb:
    def _small_index(self):
        rng = np.random.default_rng(21)
        bits, labels, _ = random_instance(rng, 60, 10)
        return make_index(bits, labels)

    def test_build_and_round_trip(self, tmp_path):
        index = self._small_index()
        db = build_explanation_db(index, rows=range(20),
                                  model_hash="mh", dataset_hash="dh")
        assert len(db.entries) >= 1
        for entry in db.entries.values():
            if entry.error is not None:
                continue
            assert set(entry.rules) == {
                "max_sparsity", "support+0", "support+1", "support+2"}
        path = tmp_path / "explain.db"
        db.save(path)
        loaded = ExplanationDb.load(path)
        assert loaded.model_hash == "mh" and loaded.dataset_hash == "dh"
        assert set(loaded.entries) == set(db.entries)
        key = next(iter(db.entries))
        if db.entries[key].rules:
            a = db.entries[key].rules["support+0"]
            b = loaded.entries[key].rules["support+0"]
            assert (a.features, a.label, a.support) == (b.features, b.label, b.support)

    def test_resume_skips_existing(self):
        index = self._small_index()
        db = build_explanation_db(index, rows=range(5))
        marker = next(iter(db.entries))
        sentinel = db.entries[marker]
        db2 = build_explanation_db(index, rows=range(10), db=db)
        assert db2 is db
        assert db.entries[marker] is sentinel
        assert len(db.entries) >= len({pattern_key(index.bits[i]) for i in range(10)})

    def test_per_pattern_failures_recorded(self):
        # One row identical to an opposite-label row: no rule exists for it.
        bits = np.array([[1, 1], [1, 1], [0, 1]], dtype=np.uint8)
        index = make_index(bits, [1, 0, 0])
        db = build_explanation_db(index)
        failed = db.entries[pattern_key(bits[0])]
        assert failed.error is not None
        assert failed.rules == {}


class TestCascade:
    def _index(self):
        rng = np.random.default_rng(33)
        bits, labels, _ = random_instance(rng, 80, 10)
        return make_index(bits, labels)

    def test_solves_when_no_db(self):
        index = self._index()
        for i in range(10):
            y = int(index.labels[i])
            try:
                res = explain(index.bits[i], index, y)
            except OutlierError:
                continue
            assert res.rule.label == y
            assert res.rule.support > res.support_threshold
            assert verify_rule(res.rule, index).consistent

    def test_db_hit_short_circuits(self):
        index = self._index()
        i = 0
        y = int(index.labels[i])
        db = build_explanation_db(index, rows=[i])
        entry = db.entries[pattern_key(index.bits[i])]
        if entry.rules and max(r.support for r in entry.rules.values()) > 10:
            res = explain(index.bits[i], index, y, db=db)
            assert res.step == "db-hit"

    def test_stale_db_rule_is_rejected(self):
        index = self._index()
        i, y = None, None
        for row in range(index.n_rows):
            try:
                explain(index.bits[row], index, int(index.labels[row]))
            except OutlierError:
                continue
            i, y = row, int(index.labels[row])
            break
        assert i is not None
        db = ExplanationDb()
        # A cached rule that is inconsistent against the current dataset must
        # not be served even though its recorded support is attractive.
        inconsistent = Rule((), y, index.n_rows)
        db.entries[pattern_key(index.bits[i])] = DbEntry(
            rules={"max_sparsity": inconsistent})
        res = explain(index.bits[i], index, y, db=db)
        assert res.step != "db-hit"
        assert verify_rule(res.rule, index).consistent

    def test_outlier_when_everything_is_low_support(self):
        # The query row shares nothing with the same-label rows, so any
        # consistent rule has support 1, below both thresholds.
        bits = np.array([
            [1, 1, 0, 0],
            [0, 0, 1, 1],
            [0, 0, 1, 1],
            [0, 0, 1, 1],
        ], dtype=np.uint8)
        index = make_index(bits, [1, 0, 0, 0])
        with pytest.raises(OutlierError):
            explain(bits[0], index, 1)

    def test_infeasible_query_is_outlier(self):
        bits = np.array([[1, 1], [1, 1]], dtype=np.uint8)
        index = make_index(bits, [1, 0])
        with pytest.raises(OutlierError):
            explain(bits[0], index, 1)
