"""Constrained fitting for the additive risk model.

Each subscale is an l2-regularized logistic regression over its binary
columns with non-negativity on the coefficients of monotone-feature
indicators; the second layer is the same over subscale risks with all
weights non-negative. Solved by projected gradient with backtracking
(Armijo) line search, so box constraints hold exactly at every iterate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import RawDataset, Schema, split as make_splits
from .errors import NonConvergence, SingleClassDataset
from .model import (
    ArmModel,
    Binarizer,
    BinaryKind,
    FeatureSpec,
    Monotonicity,
    Subscale,
    sigmoid,
)


@dataclass
class TrainConfig:
    l2_lambda: float | None = None   # None -> 1e-3 * N
    max_iters: int = 5000
    grad_tol: float = 1e-6
    joint_alpha: float = 0.0
    seed: int = 0
    step_init: float = 1.0
    backtrack: float = 0.5
    armijo_c: float = 1e-4
    n_thresholds: int = 9            # decile cut points by default
    raise_on_nonconvergence: bool = False

    def resolve_lambda(self, n_rows: int) -> float:
        return 1e-3 * n_rows if self.l2_lambda is None else self.l2_lambda


@dataclass
class SubscaleFit:
    name: str
    loss: float
    iterations: int
    converged: bool
    kkt_residual: float
    active_constraints: int


@dataclass
class FitReport:
    subscales: list = field(default_factory=list)
    second_layer: SubscaleFit | None = None
    joint: SubscaleFit | None = None
    train_accuracy: float | None = None

    def to_document(self) -> dict:
        def d(f):
            return None if f is None else f.__dict__
        return {
            "subscales": [d(f) for f in self.subscales],
            "second_layer": d(self.second_layer),
            "joint": d(self.joint),
            "train_accuracy": self.train_accuracy,
        }


# -- core solver ---------------------------------------------------------


def _nll_grad(w, X, y, lam, reg_mask):
    """Regularized logistic loss (per-row mean) and gradient.

    Parameter layout: w[:-1] coefficients, w[-1] intercept (never regularized).
    Both the data term and the l2 term are divided by N, so grad_tol is
    scale-free in the dataset size.
    """
    n = max(len(y), 1)
    z = X @ w[:-1] + w[-1]
    zc = np.clip(z, -36.0, 36.0)
    nll = float(np.sum(np.logaddexp(0.0, zc) - y * zc))
    resid = sigmoid(z) - y
    g = np.empty_like(w)
    g[:-1] = X.T @ resid
    g[-1] = resid.sum()
    nll += 0.5 * lam * float(np.sum((w[:-1] * reg_mask[:-1]) ** 2))
    g[:-1] += lam * w[:-1] * reg_mask[:-1]
    return nll / n, g / n


def _project(w, lower_mask):
    out = w.copy()
    out[lower_mask] = np.maximum(out[lower_mask], 0.0)
    return out


def kkt_residual(w, g, lower_mask):
    """Max violation of the box-constrained stationarity conditions."""
    free = np.abs(g).copy()
    at_bound = lower_mask & (w == 0.0)
    # At an active bound only a negative gradient (pushing into the feasible
    # region) counts as a violation.
    free[at_bound] = np.maximum(0.0, -g[at_bound])
    return float(np.max(free)) if free.size else 0.0


def _lbfgsb_warm_start(fun, w0, lower_mask):
    """Cheap near-optimal start for the projected-gradient polish; bounds
    match the projection set exactly, so feasibility is preserved."""
    from scipy.optimize import minimize

    bounds = [(0.0, None) if lo else (None, None) for lo in lower_mask]
    res = minimize(fun, w0, jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": 500, "ftol": 1e-14, "gtol": 1e-9})
    return res.x


def projected_gradient(fun, w0, lower_mask, config: TrainConfig, warm_start=True):
    """Minimize fun(w) -> (value, grad) over {w : w[lower_mask] >= 0}."""
    w0 = np.asarray(w0, dtype=float)
    if warm_start:
        w0 = _lbfgsb_warm_start(fun, w0, lower_mask)
    w = _project(w0, lower_mask)
    f, g = fun(w)
    step = config.step_init
    w_prev = g_prev = None
    it = 0
    for it in range(1, config.max_iters + 1):
        if kkt_residual(w, g, lower_mask) <= config.grad_tol:
            return w, f, g, it - 1, True
        # Barzilai-Borwein trial step, safeguarded by the Armijo backtracking
        # below (objective stays non-increasing, constraints stay exact).
        if w_prev is not None:
            dw = w - w_prev
            dg = g - g_prev
            denom = float(dw @ dg)
            if denom > 1e-18:
                step = float(dw @ dw) / denom
        step = float(np.clip(step / config.backtrack, 1e-10, 1e10))
        w_prev, g_prev = w, g
        while True:
            w_new = _project(w - step * g, lower_mask)
            diff = w - w_new
            decrease = float(g @ diff)
            f_new, g_new = fun(w_new)
            if f_new <= f - config.armijo_c * decrease or step < 1e-14:
                break
            step *= config.backtrack
        if np.array_equal(w_new, w):  # no feasible progress
            return w, f, g, it, kkt_residual(w, g, lower_mask) <= config.grad_tol
        w, f, g = w_new, f_new, g_new
    return w, f, g, it, kkt_residual(w, g, lower_mask) <= config.grad_tol


def _finish(name, w, f, g, iters, converged, lower_mask, config):
    fit = SubscaleFit(
        name=name,
        loss=f,
        iterations=iters,
        converged=converged,
        kkt_residual=kkt_residual(w, g, lower_mask),
        active_constraints=int(np.sum(lower_mask & (w == 0.0))),
    )
    if not converged:
        msg = f"{name}: KKT residual {fit.kkt_residual:.2e} after {iters} iterations"
        if config.raise_on_nonconvergence:
            raise NonConvergence(msg, result=fit)
        warnings.warn(msg, RuntimeWarning)
    return fit


def fit_logistic(X, y, constrained, config: TrainConfig, name="fit", lam=None):
    """Shared path for subscale and second-layer fits.

    constrained: bool mask over coefficient entries forced >= 0.
    Returns (coefficients, intercept, SubscaleFit).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    lam = config.resolve_lambda(len(y)) if lam is None else lam
    n_coef = X.shape[1]
    lower = np.zeros(n_coef + 1, dtype=bool)
    lower[:n_coef] = constrained
    reg = np.ones(n_coef + 1)
    reg[-1] = 0.0
    w0 = np.zeros(n_coef + 1)
    w, f, g, iters, conv = projected_gradient(
        lambda w: _nll_grad(w, X, y, lam, reg), w0, lower, config
    )
    fit = _finish(name, w, f, g, iters, conv, lower, config)
    return w[:n_coef], float(w[n_coef]), fit


def constrained_mask(binarizer: Binarizer, cols) -> np.ndarray:
    """Non-negativity applies to threshold indicators of monotone features."""
    mask = np.zeros(len(cols), dtype=bool)
    for i, c in enumerate(cols):
        bf = binarizer.binary_features[c]
        spec = binarizer.specs[bf.parent]
        mask[i] = (
            bf.kind != BinaryKind.NOT_MISSING
            and spec.monotonicity != Monotonicity.NONE
        )
    return mask


def fit_subscale(binarizer, cols, bits, y, config: TrainConfig, name="subscale"):
    """Fit one subscale over its original binary columns."""
    X = bits[:, cols].astype(float)
    mask = constrained_mask(binarizer, cols)
    beta, bias, fit = fit_logistic(X, y, mask, config, name=name)
    return beta, bias, fit


def fit_second_layer(risks, y, config: TrainConfig):
    """Fit gamma >= 0 over the K subscale-risk columns."""
    risks = np.asarray(risks, dtype=float)
    mask = np.ones(risks.shape[1], dtype=bool)
    gamma, bias, fit = fit_logistic(risks, y, mask, config, name="second_layer")
    return gamma, bias, fit


# -- model assembly ------------------------------------------------------


def decile_thresholds(values: np.ndarray, missing_codes, n_cuts: int = 9):
    """Deduplicated empirical quantile cut points over non-missing values."""
    vals = np.asarray(values, dtype=float)
    keep = ~np.isnan(vals)
    for code in missing_codes:
        keep &= vals != code
    vals = vals[keep]
    if vals.size == 0:
        return (0.5,)
    qs = np.quantile(vals, np.linspace(0, 1, n_cuts + 2)[1:-1])
    cuts = sorted(set(float(q) for q in qs))
    if len(cuts) == 1 and vals.min() == vals.max():
        cuts = [float(vals[0]) + 0.5]
    return tuple(cuts)


def build_binarizer(dataset: RawDataset, schema: Schema, n_thresholds: int = 9,
                    overrides: dict | None = None) -> Binarizer:
    """Default thresholds at training-data deciles; per-feature overrides win."""
    overrides = overrides or {}
    specs = []
    for j, info in enumerate(schema.features):
        ts = overrides.get(info.name) or decile_thresholds(
            dataset.X[:, j], schema.missing_codes, n_thresholds
        )
        specs.append(
            FeatureSpec(
                name=info.name,
                monotonicity=info.monotonicity,
                thresholds=tuple(ts),
                missing_codes=frozenset(schema.missing_codes),
            )
        )
    return Binarizer(specs)


def train_model(dataset: RawDataset, schema: Schema, config: TrainConfig | None = None,
                binarizer: Binarizer | None = None):
    """Two-stage fit (independent subscales, then the combining layer),
    optionally followed by the joint objective when joint_alpha > 0.

    Returns (ArmModel, FitReport).
    """
    config = config or TrainConfig()
    if dataset.y.min() == dataset.y.max():
        raise SingleClassDataset("training requires both classes")
    binarizer = binarizer or build_binarizer(dataset, schema, config.n_thresholds)
    bits = binarizer.binarize_matrix(dataset.X)
    y = dataset.y.astype(float)
    report = FitReport()

    subscales = []
    risks = np.zeros((dataset.n_rows, len(schema.subscale_groups)))
    for k, (name, members) in enumerate(schema.subscale_groups.items()):
        fidx = tuple(schema.feature_index(m) for m in members)
        cols = [c for p in fidx for c in binarizer.feature_columns(p)]
        beta, bias, fit = fit_subscale(binarizer, cols, bits, y, config, name=name)
        report.subscales.append(fit)
        subscales.append(
            Subscale(name, fidx, dict(zip(cols, beta.tolist())), bias)
        )
        risks[:, k] = sigmoid(bits[:, cols].astype(float) @ beta + bias)

    gamma, gamma0, fit2 = fit_second_layer(risks, y, config)
    report.second_layer = fit2
    model = ArmModel(binarizer, subscales, gamma, gamma0)

    if config.joint_alpha > 0.0:
        model, joint_fit = fit_joint(model, bits, y, config)
        report.joint = joint_fit

    probs = model.predict_proba_bits(bits)
    report.train_accuracy = float(np.mean((probs >= 0.5) == (y == 1)))
    return model, report


# -- joint objective -----------------------------------------------------


def _pack(model: ArmModel):
    w, blocks = [], []
    for sub in model.subscales:
        cols = sub.columns()
        blocks.append(cols)
        w.extend(sub.coefficients[c] for c in cols)
        w.append(sub.bias)
    w.extend(model.second_layer_weights.tolist())
    w.append(model.second_layer_bias)
    return np.array(w), blocks


def _unpack(model: ArmModel, w, blocks):
    subscales = []
    i = 0
    for sub, cols in zip(model.subscales, blocks):
        beta = w[i : i + len(cols)]
        bias = w[i + len(cols)]
        i += len(cols) + 1
        subscales.append(Subscale(sub.name, sub.feature_indices,
                                  dict(zip(cols, beta.tolist())), float(bias)))
    k = len(model.subscales)
    gamma = w[i : i + k]
    gamma0 = float(w[i + k])
    return ArmModel(model.binarizer, subscales, np.maximum(gamma, 0.0), gamma0)


def joint_objective(model: ArmModel, bits, y, w, blocks, alpha, lam):
    """alpha * global NLL + (1-alpha) * mean subscale NLL, l2 on coefficients."""
    n_sub = len(model.subscales)
    Xs, scores, risks = [], [], []
    i = 0
    reg = 0.0
    grad = np.zeros_like(w)
    seg = []   # (start, cols) per subscale
    for cols in blocks:
        seg.append((i, cols))
        i += len(cols) + 1
    gi = i
    gamma = w[gi : gi + n_sub]
    gamma0 = w[gi + n_sub]

    total = 0.0
    glogit = np.full(bits.shape[0], gamma0)
    for k, (start, cols) in enumerate(seg):
        beta = w[start : start + len(cols)]
        bias = w[start + len(cols)]
        X = bits[:, cols].astype(float)
        s = X @ beta + bias
        r = sigmoid(s)
        Xs.append(X)
        scores.append(s)
        risks.append(r)
        glogit += gamma[k] * r
        sc = np.clip(s, -36.0, 36.0)
        total += (1.0 - alpha) / n_sub * float(np.sum(np.logaddexp(0.0, sc) - y * sc))
        reg += 0.5 * lam * float(beta @ beta)
        grad[start : start + len(cols)] += lam * beta

    gp = sigmoid(glogit) - y
    gc = np.clip(glogit, -36.0, 36.0)
    total += alpha * float(np.sum(np.logaddexp(0.0, gc) - y * gc))
    reg += 0.5 * lam * float(gamma @ gamma)
    grad[gi : gi + n_sub] += lam * gamma

    for k, (start, cols) in enumerate(seg):
        r = risks[k]
        back = alpha * gamma[k] * gp * r * (1.0 - r) + (1.0 - alpha) / n_sub * (r - y)
        grad[start : start + len(cols)] += Xs[k].T @ back
        grad[start + len(cols)] += back.sum()
        grad[gi + k] += alpha * float(gp @ r)
    grad[gi + n_sub] += alpha * gp.sum()
    n = max(bits.shape[0], 1)
    return (total + reg) / n, grad / n


def fit_joint(model: ArmModel, bits, y, config: TrainConfig):
    """Refine all parameters under the combined objective, warm-started from
    the two-stage solution. Projection keeps every constraint exact."""
    alpha = config.joint_alpha
    lam = config.resolve_lambda(len(y))
    w0, blocks = _pack(model)
    lower = np.zeros_like(w0, dtype=bool)
    i = 0
    for cols in blocks:
        mask = constrained_mask(model.binarizer, cols)
        lower[i : i + len(cols)] = mask
        i += len(cols) + 1
    n_sub = len(model.subscales)
    lower[i : i + n_sub] = True   # gamma >= 0

    fun = lambda w: joint_objective(model, bits, y, w, blocks, alpha, lam)
    w, f, g, iters, conv = projected_gradient(fun, w0, lower, config)
    fit = _finish("joint", w, f, g, iters, conv, lower, config)
    return _unpack(model, w, blocks), fit


# -- evaluation ----------------------------------------------------------


@dataclass
class EvalResult:
    arm_accuracies: list
    baseline_accuracies: list
    majority_accuracies: list

    @property
    def arm_mean(self):
        return float(np.mean(self.arm_accuracies))

    @property
    def arm_std(self):
        return float(np.std(self.arm_accuracies))

    @property
    def baseline_mean(self):
        return float(np.mean(self.baseline_accuracies))

    @property
    def majority_mean(self):
        return float(np.mean(self.majority_accuracies))

    def to_document(self):
        return {
            "arm": {"mean": self.arm_mean, "std": self.arm_std,
                    "per_split": self.arm_accuracies},
            "logistic_baseline": {"mean": self.baseline_mean,
                                  "per_split": self.baseline_accuracies},
            "majority_baseline": {"mean": self.majority_mean,
                                  "per_split": self.majority_accuracies},
        }


def evaluate(dataset: RawDataset, schema: Schema, config: TrainConfig | None = None,
             n_splits: int = 5, test_frac: float = 0.2, seed: int = 0) -> EvalResult:
    """Mean/std test accuracy over random splits, with an unconstrained
    logistic baseline (same binarized features) and the majority class."""
    from sklearn.linear_model import LogisticRegression

    config = config or TrainConfig()
    splits = make_splits(dataset, test_frac, n_splits, seed)
    arm_acc, base_acc, maj_acc = [], [], []
    for tr, te in splits:
        train_ds = RawDataset(dataset.feature_names, dataset.X[tr], dataset.y[tr])
        test_ds = RawDataset(dataset.feature_names, dataset.X[te], dataset.y[te])
        model, _ = train_model(train_ds, schema, config)
        probs = model.predict_proba_matrix(test_ds.X)
        arm_acc.append(float(np.mean((probs >= 0.5) == (test_ds.y == 1))))

        bits_tr = model.binarizer.binarize_matrix(train_ds.X)[:, : model.binarizer.n_original]
        bits_te = model.binarizer.binarize_matrix(test_ds.X)[:, : model.binarizer.n_original]
        lr = LogisticRegression(max_iter=2000, C=1.0)
        lr.fit(bits_tr, train_ds.y)
        base_acc.append(float(lr.score(bits_te, test_ds.y)))

        maj = int(np.bincount(train_ds.y, minlength=2).argmax())
        maj_acc.append(float(np.mean(test_ds.y == maj)))
    return EvalResult(arm_acc, base_acc, maj_acc)
