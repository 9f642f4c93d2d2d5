import numpy as np
import pytest

from armkit.data import SyntheticSpec, generate_synthetic
from armkit.model import ArmModel, Binarizer, FeatureSpec, Monotonicity, Subscale


def random_model(rng, n_features=4, n_thresholds=3, n_subscales=2):
    """A random constrained model: non-negative coefficients for monotone
    thresholds, non-negative second-layer weights."""
    monos = [
        [Monotonicity.DECREASING, Monotonicity.INCREASING, Monotonicity.NONE][rng.integers(3)]
        for _ in range(n_features)
    ]
    specs = []
    for p in range(n_features):
        ts = np.sort(rng.uniform(0, 100, n_thresholds))
        ts = np.unique(np.round(ts, 3))
        specs.append(
            FeatureSpec(f"f{p}", monos[p], tuple(ts), frozenset({-9.0}))
        )
    binarizer = Binarizer(specs)
    perm = rng.permutation(n_features)
    groups = np.array_split(perm, n_subscales)
    subscales = []
    for k, group in enumerate(groups):
        coefs = {}
        for p in group:
            for i, c in enumerate(binarizer.feature_columns(int(p))):
                spec = specs[int(p)]
                if spec.monotonicity == Monotonicity.NONE:
                    coefs[c] = float(rng.normal(0, 1))
                elif i < len(spec.thresholds):
                    coefs[c] = float(rng.uniform(0, 1.5))
                else:
                    coefs[c] = float(rng.normal(0, 0.5))
        subscales.append(
            Subscale(f"sub{k}", tuple(int(p) for p in group), coefs, float(rng.normal(0, 0.5)))
        )
    weights = rng.uniform(0, 2, n_subscales)
    return ArmModel(binarizer, subscales, weights, float(rng.normal(0, 0.5)))


def random_row(rng, model, missing_rate=0.1):
    row = []
    for spec in model.binarizer.specs:
        if rng.random() < missing_rate:
            row.append(-9.0)
        else:
            row.append(float(rng.uniform(-20, 120)))
    return row


@pytest.fixture(scope="session")
def small_synthetic():
    return generate_synthetic(SyntheticSpec(n_rows=600, seed=11, missing_rate=0.02))
