"""Acceptance gate: the eight required end-to-end behaviors.

Each test prints a single summary line so a log scan shows which gate
passed. The heavy fixtures (trained models on larger synthetic datasets)
are module-scoped and shared.
"""

import itertools
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from armkit import (
    DatasetIndex,
    ExplainContext,
    InfeasibleExplanation,
    SolverBudget,
    SyntheticSpec,
    TrainConfig,
    build_context,
    build_explanation_db,
    evaluate,
    four_setting_rules,
    generate_synthetic,
    fico_schema,
    solve_max_sparsity,
    solve_max_support,
    train_model,
    verify_rule,
)
from armkit.service import build_state, create_app
from armkit.train import _nll_grad

from conftest import random_model, random_row


def _trained(n_rows, seed):
    spec = SyntheticSpec(n_rows=n_rows, seed=seed)
    dataset = generate_synthetic(spec)
    model, _ = train_model(dataset, spec.schema, TrainConfig(seed=0))
    bits = model.binarizer.binarize_matrix(dataset.X)
    index = DatasetIndex(bits, model.model_labels(bits), model=model)
    return dataset, model, bits, index


@pytest.fixture(scope="module")
def trained_5k():
    return _trained(5000, 3)


@pytest.fixture(scope="module")
def trained_10459():
    return _trained(10459, 7)


# -- 1. exact solvers vs enumeration -------------------------------------


def _enumerate_min_sparsity(Z):
    """Z: opposite-rows x candidates exclusion matrix (True where the
    candidate rules the row out)."""
    n = Z.shape[1]
    for size in range(n + 1):
        for sel in itertools.combinations(range(n), size):
            if Z[:, sel].any(axis=1).all():
                return size, sel
    return None, None


def _enumerate_max_support(bits, Z, cap):
    best = None
    n = Z.shape[1]
    for size in range(cap + 1):
        for sel in itertools.combinations(range(n), size):
            if not Z[:, sel].any(axis=1).all():
                continue
            support = int(np.all(bits[:, sel] == 1, axis=1).sum())
            if best is None or support > best:
                best = support
    return best


def test_exact_solvers_match_enumeration():
    rng = np.random.default_rng(2024)
    solved = 0
    slowest = 0.0
    while solved < 500:
        n_rows = int(rng.integers(20, 201))
        n_cols = int(rng.integers(3, 16))
        marginals = rng.uniform(0.25, 0.9, size=n_cols)
        bits = (rng.random((n_rows, n_cols)) < marginals).astype(np.uint8)
        labels = rng.integers(0, 2, size=n_rows).astype(np.int8)
        x_bits = np.ones(n_cols, dtype=np.uint8)
        index = DatasetIndex(bits, labels)
        try:
            ctx = build_context(x_bits, index, 1)
        except InfeasibleExplanation:
            continue
        Z = bits[labels != 1] == 0
        t0 = time.monotonic()
        sparse = solve_max_sparsity(ctx)
        cap = sparse.sparsity + int(rng.integers(0, 2))
        wide = solve_max_support(ctx, cap)
        elapsed = time.monotonic() - t0
        slowest = max(slowest, elapsed)
        assert elapsed < 1.0
        assert sparse.exact and wide.exact
        oracle_size, _ = _enumerate_min_sparsity(Z)
        assert sparse.sparsity == oracle_size
        assert wide.support == _enumerate_max_support(bits, Z, cap)
        solved += 1
    print(f"\nPASS exactness: 500/500 instances match enumeration "
          f"(slowest {slowest * 1e3:.0f} ms)")


# -- 2. consistency audit ------------------------------------------------


def test_explanations_verified_and_monotone_at_scale(trained_5k):
    dataset, model, bits, index = trained_5k
    rng = np.random.default_rng(0)
    rows = rng.choice(dataset.n_rows, 1000, replace=False)
    budget = SolverBudget(time_limit=0.5, node_limit=5000)
    verified = 0
    monotone = 0
    for i in rows:
        ctx = ExplainContext(bits[i], index, int(index.labels[i]))
        rules = four_setting_rules(ctx, budget)
        checks = [verify_rule(r, index) for r in rules.values()]
        verified += all(
            v.consistent and not v.counterexamples for v in checks)
        sup = [rules[f"support+{k}"].support for k in range(3)]
        monotone += sup[0] <= sup[1] <= sup[2]
    assert verified == 1000
    assert monotone == 1000
    print("\nPASS audit: 1000/1000 rows verified with zero counterexamples, "
          "relaxation monotonicity 100%")


# -- 3. rule-quality trend at full scale ---------------------------------


def test_sparsity_and_support_trend_at_full_scale(trained_10459):
    dataset, model, bits, index = trained_10459
    rng = np.random.default_rng(1)
    rows = rng.choice(dataset.n_rows, 100, replace=False)
    budget = SolverBudget(time_limit=1.6, node_limit=100_000)
    quartets = []
    slowest = 0.0
    for i in rows:
        t0 = time.monotonic()
        ctx = ExplainContext(bits[i], index, int(index.labels[i]))
        quartets.append(four_setting_rules(ctx, budget))
        elapsed = time.monotonic() - t0
        slowest = max(slowest, elapsed)
        assert elapsed < 7.0
    mean_sparsity = float(np.mean(
        [q["support+0"].sparsity for q in quartets]))
    assert 2.5 <= mean_sparsity <= 3.5
    fracs = [
        np.mean([q[f"support+{k}"].support < 10 for q in quartets])
        for k in range(3)
    ]
    assert fracs[0] > fracs[1] > fracs[2]
    print(f"\nPASS trend: mean sparsity {mean_sparsity:.2f} in [2.5, 3.5]; "
          f"support<10 fractions {fracs[0]:.2f} > {fracs[1]:.2f} > "
          f"{fracs[2]:.2f}; slowest explanation {slowest:.1f} s < 7 s")


# -- 4. monotonicity sweeps ----------------------------------------------


def test_monotone_feature_sweeps_never_violate_direction():
    rng = np.random.default_rng(7)
    violations = 0
    checked = 0
    for _ in range(100):
        model = random_model(rng, n_features=int(rng.integers(2, 5)))
        base_rows = np.array(
            [random_row(rng, model) for _ in range(100)], dtype=float)
        for p, spec in enumerate(model.binarizer.specs):
            if spec.monotonicity.value == "none":
                continue
            grid = [spec.thresholds[0] - 1.0]
            for t in spec.thresholds:
                grid.extend([t - 0.25, t, t + 0.25])
            grid.append(spec.thresholds[-1] + 1.0)
            grid.sort()
            for g in grid:
                assert g not in spec.missing_codes
            swept = np.repeat(base_rows, len(grid), axis=0)
            swept[:, p] = np.tile(grid, len(base_rows))
            probs = model.predict_proba_matrix(swept).reshape(
                len(base_rows), len(grid))
            diffs = np.diff(probs, axis=1)
            if spec.monotonicity.value == "decreasing":
                violations += int(np.sum(diffs > 0))
            else:
                violations += int(np.sum(diffs < 0))
            checked += diffs.size
    assert violations == 0
    print(f"\nPASS monotonicity: 0 violations over {checked} sweep steps "
          "(100 models x 100 rows)")


# -- 5. scoring-table equivalence ----------------------------------------


def test_scoring_table_equals_step_sum_on_grid():
    rng = np.random.default_rng(17)
    for _ in range(50):
        model = random_model(rng, n_features=int(rng.integers(2, 5)),
                             n_thresholds=int(rng.integers(1, 6)))
        for sub in model.subscales:
            for p in sub.feature_indices:
                spec = model.binarizer.specs[p]
                table = model.to_scoring_table(sub, p)
                lo = spec.thresholds[0] - 5.0
                hi = spec.thresholds[-1] + 5.0
                grid = np.linspace(lo, hi, 1000)
                for v in grid:
                    if v in spec.missing_codes:
                        continue
                    assert table.lookup(v) == model.feature_score(sub, p, v)
    print("\nPASS rewrite: scoring-table lookup identical to step-function "
          "sum on 1000-point grids for 50 models")


# -- 6. training correctness ---------------------------------------------


def test_gradients_constraints_and_separable_fit():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(50):
        n, p = int(rng.integers(5, 30)), int(rng.integers(1, 6))
        X = rng.normal(size=(n, p))
        y = rng.integers(0, 2, size=n).astype(float)
        w = rng.normal(size=p + 1)
        lam = float(rng.uniform(0, 0.2))
        reg_mask = np.ones(p + 1)
        reg_mask[-1] = 0
        _, grad = _nll_grad(w, X, y, lam, reg_mask)
        num = np.zeros_like(w)
        eps = 1e-6
        for j in range(len(w)):
            up, dn = w.copy(), w.copy()
            up[j] += eps
            dn[j] -= eps
            num[j] = (_nll_grad(up, X, y, lam, reg_mask)[0]
                      - _nll_grad(dn, X, y, lam, reg_mask)[0]) / (2 * eps)
        rel = np.abs(grad - num) / np.maximum(np.abs(num), 1e-8)
        worst = max(worst, float(rel.max()))
    assert worst < 1e-5

    spec = SyntheticSpec(n_rows=400, seed=6)
    dataset = generate_synthetic(spec)
    model, _ = train_model(dataset, spec.schema, TrainConfig(seed=0))
    for sub in model.subscales:
        schema_feats = {f.name: f for f in spec.schema.features}
        for p in sub.feature_indices:
            fspec = model.binarizer.specs[p]
            if schema_feats[fspec.name].monotonicity.value == "none":
                continue
            thr_cols = list(model.binarizer.feature_columns(p))[
                : len(fspec.thresholds)]
            for c in thr_cols:
                assert sub.coefficients.get(c, 0.0) >= 0.0

    # A linearly separable toy must be fit perfectly.
    from armkit.train import fit_logistic
    Xs = np.array([[0.0], [1.0], [2.0], [10.0], [11.0], [12.0]])
    ys = np.array([0, 0, 0, 1, 1, 1], dtype=float)
    coef, intercept, _ = fit_logistic(
        Xs, ys, np.array([False]), TrainConfig(l2_lambda=1e-9, seed=0))
    pred = ((Xs @ coef + intercept) >= 0).astype(float).ravel()
    assert np.array_equal(pred, ys)
    print(f"\nPASS training: worst gradient deviation {worst:.2e} < 1e-5; "
          "constrained coefficients non-negative; separable toy accuracy 1.0")


# -- 7. accuracy parity ---------------------------------------------------


def test_accuracy_vs_unconstrained_and_majority_baselines():
    t0 = time.monotonic()
    spec = SyntheticSpec(n_rows=10_000, seed=13)
    dataset = generate_synthetic(spec)
    res = evaluate(dataset, spec.schema, TrainConfig(seed=0),
                   n_splits=5, test_frac=0.2, seed=0)
    elapsed = time.monotonic() - t0
    assert res.arm_mean >= res.baseline_mean - 0.01
    assert res.arm_mean >= res.majority_mean + 0.15
    assert res.baseline_mean >= res.majority_mean + 0.15
    assert elapsed < 120.0
    print(f"\nPASS parity: mean accuracy {res.arm_mean:.4f} vs baseline "
          f"{res.baseline_mean:.4f} (majority {res.majority_mean:.4f}) "
          f"in {elapsed:.0f} s")


# -- 8. end-to-end service demo ------------------------------------------


def test_end_to_end_service_replay():
    dataset, model, bits, index = _trained(2000, 23)
    db = build_explanation_db(
        index, rows=range(100),
        budget=SolverBudget(time_limit=0.5, node_limit=5000),
        model_hash=model.model_hash)
    state = build_state(model, dataset, db=db,
                        budget=SolverBudget(time_limit=2.0, node_limit=50_000))
    client = TestClient(create_app(state))
    names = [f.name for f in fico_schema().features]

    predict_times, explain_times = [], []
    outliers = 0
    for i in range(100):
        payload = {"features": dict(zip(names, dataset.X[i].tolist()))}
        t0 = time.monotonic()
        r = client.post("/predict", json=payload)
        predict_times.append(time.monotonic() - t0)
        assert r.status_code == 200

        t0 = time.monotonic()
        r = client.post("/explain", json=payload)
        explain_times.append(time.monotonic() - t0)
        if r.status_code == 422:
            outliers += 1
            continue
        assert r.status_code == 200
        rule_cols = [f["column"] for f in r.json()["rule"]["features"]]

        r = client.post("/cases", json=payload)
        assert r.status_code == 200
        for case in r.json()["cases"]:
            case_row = [case["raw_values"][n] for n in names]
            case_bits = model.binarizer.binarize_row(case_row)
            assert all(case_bits[c] == 1 for c in rule_cols)

    p95 = lambda xs: sorted(xs)[int(len(xs) * 0.95)]
    assert p95(explain_times) < 7.0
    assert p95(predict_times) < 0.010
    print(f"\nPASS demo: 100 replays, /predict p95 "
          f"{p95(predict_times) * 1e3:.1f} ms < 10 ms, /explain p95 "
          f"{p95(explain_times):.2f} s < 7 s, {outliers} outliers, "
          "all served cases satisfy their rule")
