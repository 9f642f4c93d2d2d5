"""Two-layer additive risk model: binarization, scoring, prediction, importance.

The model binarizes each raw feature into one-sided step indicators, sums them
with non-negative coefficients inside subscales (preserving monotonicity),
squashes each subscale score through a sigmoid into a subscale risk, and
linearly combines the subscale risks (non-negative weights) through a final
sigmoid into a default probability.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ColumnCountMismatch,
    FeatureNotInSubscale,
    MalformedDocument,
    SchemaVersionMismatch,
)

SCHEMA_VERSION = 1

# Logits clamped before exponentiation; keeps probabilities strictly in (0,1)
# at double precision without overflow.
LOGIT_CLAMP = 36.0


def sigmoid(z):
    z = np.clip(z, -LOGIT_CLAMP, LOGIT_CLAMP)
    return 1.0 / (1.0 + np.exp(-z))


class Monotonicity(str, Enum):
    INCREASING = "increasing"
    DECREASING = "decreasing"
    NONE = "none"


@dataclass(frozen=True)
class FeatureSpec:
    """Binarization recipe for one raw feature."""

    name: str
    monotonicity: Monotonicity = Monotonicity.NONE
    thresholds: tuple = ()
    missing_codes: frozenset = frozenset({-7.0, -8.0, -9.0})
    include_not_missing_indicator: bool = True

    def __post_init__(self):
        object.__setattr__(self, "monotonicity", Monotonicity(self.monotonicity))
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        object.__setattr__(self, "missing_codes", frozenset(float(c) for c in self.missing_codes))
        if not self.thresholds:
            raise ValueError(f"feature {self.name!r} needs at least one threshold")
        if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ValueError(f"feature {self.name!r} thresholds must be strictly increasing")

    def is_missing(self, raw) -> bool:
        return raw is None or (isinstance(raw, float) and math.isnan(raw)) or float(raw) in self.missing_codes

    @property
    def n_binary(self) -> int:
        return len(self.thresholds) + (1 if self.include_not_missing_indicator else 0)


class BinaryKind(str, Enum):
    THRESHOLD_BELOW = "below"   # 1[x < t]
    THRESHOLD_ABOVE = "above"   # 1[x > t]
    NOT_MISSING = "not_missing"


@dataclass(frozen=True)
class BinaryFeature:
    """One step-function indicator derived from a raw feature."""

    parent: int
    kind: BinaryKind
    threshold: float | None
    display_name: str

    def complement_name(self) -> str:
        base = self.display_name
        if self.kind == BinaryKind.THRESHOLD_BELOW:
            return base.replace(" < ", " ≥ ")
        if self.kind == BinaryKind.THRESHOLD_ABOVE:
            return base.replace(" > ", " ≤ ")
        return base.replace(" not missing", " missing")


def _binary_features_for(spec: FeatureSpec, parent: int) -> list[BinaryFeature]:
    kind = (
        BinaryKind.THRESHOLD_ABOVE
        if spec.monotonicity == Monotonicity.INCREASING
        else BinaryKind.THRESHOLD_BELOW
    )
    op = ">" if kind == BinaryKind.THRESHOLD_ABOVE else "<"
    feats = [
        BinaryFeature(parent, kind, t, f"{spec.name} {op} {t:g}")
        for t in spec.thresholds
    ]
    if spec.include_not_missing_indicator:
        feats.append(BinaryFeature(parent, BinaryKind.NOT_MISSING, None, f"{spec.name} not missing"))
    return feats


class Binarizer:
    """Maps raw feature rows to the binary design matrix [X, X^c].

    Columns 0..P-1 are the original indicators in feature order; columns
    P..2P-1 are their complements in the same order.
    """

    def __init__(self, specs: Sequence[FeatureSpec]):
        self.specs = list(specs)
        self.binary_features: list[BinaryFeature] = []
        self._offsets = []
        for p, spec in enumerate(self.specs):
            self._offsets.append(len(self.binary_features))
            self.binary_features.extend(_binary_features_for(spec, p))

    @property
    def n_features(self) -> int:
        return len(self.specs)

    @property
    def n_original(self) -> int:
        return len(self.binary_features)

    @property
    def n_columns(self) -> int:
        return 2 * self.n_original

    def feature_columns(self, p: int) -> range:
        start = self._offsets[p]
        return range(start, start + self.specs[p].n_binary)

    def column_name(self, col: int) -> str:
        if col < self.n_original:
            return self.binary_features[col].display_name
        return self.binary_features[col - self.n_original].complement_name()

    def binarize_value(self, spec: FeatureSpec, raw) -> np.ndarray:
        """Original (non-complement) bits for a single feature value."""
        bits = np.zeros(spec.n_binary, dtype=np.uint8)
        if spec.is_missing(raw):
            return bits
        x = float(raw)
        increasing = spec.monotonicity == Monotonicity.INCREASING
        for i, t in enumerate(spec.thresholds):
            bits[i] = (x > t) if increasing else (x < t)
        if spec.include_not_missing_indicator:
            bits[-1] = 1
        return bits

    def binarize_row(self, raw_row) -> np.ndarray:
        """Full 2P-column bit vector (originals then complements)."""
        raw_row = list(raw_row)
        if len(raw_row) != self.n_features:
            raise ColumnCountMismatch(
                f"expected {self.n_features} features, got {len(raw_row)}"
            )
        orig = np.concatenate(
            [self.binarize_value(spec, v) for spec, v in zip(self.specs, raw_row)]
        )
        return np.concatenate([orig, 1 - orig])

    def binarize_matrix(self, raw: np.ndarray) -> np.ndarray:
        """Vectorized binarization of an N x P raw matrix into N x 2P bits."""
        raw = np.asarray(raw, dtype=float)
        if raw.ndim != 2 or (raw.size and raw.shape[1] != self.n_features):
            raise ColumnCountMismatch(
                f"expected {self.n_features} feature columns, got {raw.shape}"
            )
        n = raw.shape[0]
        orig = np.zeros((n, self.n_original), dtype=np.uint8)
        for p, spec in enumerate(self.specs):
            col = raw[:, p] if n else np.zeros(0)
            missing = np.isnan(col)
            for code in spec.missing_codes:
                missing |= col == code
            present = ~missing
            cols = self.feature_columns(p)
            increasing = spec.monotonicity == Monotonicity.INCREASING
            for i, t in enumerate(spec.thresholds):
                hit = (col > t) if increasing else (col < t)
                orig[:, cols[i]] = (hit & present).astype(np.uint8)
            if spec.include_not_missing_indicator:
                orig[:, cols[-1]] = present.astype(np.uint8)
        return np.concatenate([orig, 1 - orig], axis=1)


@dataclass
class Subscale:
    """A mini-model over 1-4 related raw features."""

    name: str
    feature_indices: tuple
    coefficients: dict  # original binary column index -> coefficient
    bias: float = 0.0

    def __post_init__(self):
        self.feature_indices = tuple(int(p) for p in self.feature_indices)
        self.coefficients = {int(c): float(v) for c, v in self.coefficients.items()}

    def columns(self) -> list[int]:
        return sorted(self.coefficients)


@dataclass
class ScoringRow:
    lo: float | None      # None = -inf
    hi: float | None      # None = +inf
    lo_closed: bool
    points: float

    def label(self, name: str) -> str:
        hi_op = "<" if self.lo_closed else "≤"
        lo_op = "≥" if self.lo_closed else ">"
        if self.lo is None and self.hi is None:
            return f"any {name}"
        if self.lo is None:
            return f"{name} {hi_op} {self.hi:g}"
        if self.hi is None:
            return f"{name} {lo_op} {self.lo:g}"
        left = "≤" if self.lo_closed else "<"
        return f"{self.lo:g} {left} {name} {hi_op} {self.hi:g}"

    def contains(self, v: float) -> bool:
        if self.lo is not None:
            if v < self.lo or (v == self.lo and not self.lo_closed):
                return False
        if self.hi is not None:
            if v > self.hi or (v == self.hi and self.lo_closed):
                return False
        return True


@dataclass
class ScoringTable:
    """Piecewise-constant rewrite of a feature's step-function sum."""

    feature_name: str
    rows: list   # list[ScoringRow], ascending feature order
    missing_points: float = 0.0

    def lookup(self, raw) -> float:
        if raw is None or (isinstance(raw, float) and math.isnan(raw)):
            return self.missing_points
        v = float(raw)
        for row in self.rows:
            if row.contains(v):
                return row.points
        raise ValueError(f"no interval contains {v}")  # pragma: no cover


@dataclass
class SubscaleScore:
    name: str
    points: float
    risk: float
    weight: float

    @property
    def weighted(self) -> float:
        return self.weight * self.risk


@dataclass
class ImportantFactor:
    feature: str
    subscale: str
    contribution: float


@dataclass
class Prediction:
    probability: float
    breakdown: list        # list[SubscaleScore]
    important_factors: list  # list[ImportantFactor]


class ArmModel:
    """Immutable two-layer additive risk model."""

    def __init__(self, binarizer: Binarizer, subscales: Sequence[Subscale],
                 second_layer_weights, second_layer_bias: float):
        self.binarizer = binarizer
        self.subscales = list(subscales)
        self.second_layer_weights = np.asarray(second_layer_weights, dtype=float)
        self.second_layer_bias = float(second_layer_bias)
        if len(self.second_layer_weights) != len(self.subscales):
            raise ValueError("one second-layer weight per subscale required")
        if np.any(self.second_layer_weights < 0):
            raise ValueError("second-layer weights must be non-negative")
        seen = set()
        for sub in self.subscales:
            for p in sub.feature_indices:
                if p in seen:
                    raise ValueError(f"feature {p} assigned to two subscales")
                seen.add(p)

    # -- scoring ---------------------------------------------------------

    def subscale_points(self, subscale: Subscale, bits: np.ndarray) -> float:
        pts = subscale.bias
        for col in subscale.columns():
            if bits[col]:
                pts += subscale.coefficients[col]
        return pts

    def subscale_risk(self, subscale: Subscale, bits: np.ndarray) -> tuple[float, float]:
        pts = self.subscale_points(subscale, bits)
        return pts, float(sigmoid(pts))

    def predict_bits(self, bits: np.ndarray) -> Prediction:
        breakdown = []
        for sub, w in zip(self.subscales, self.second_layer_weights):
            pts, risk = self.subscale_risk(sub, bits)
            breakdown.append(SubscaleScore(sub.name, pts, risk, float(w)))
        logit = self.second_layer_bias
        for s in breakdown:
            logit += s.weighted
        prob = float(sigmoid(logit))
        factors = self._important_factors(bits, breakdown)
        return Prediction(prob, breakdown, factors)

    def predict(self, raw_row) -> Prediction:
        return self.predict_bits(self.binarizer.binarize_row(raw_row))

    def predict_proba_matrix(self, raw: np.ndarray) -> np.ndarray:
        """Vectorized final probabilities for an N x P raw matrix."""
        bits = self.binarizer.binarize_matrix(raw)
        return self.predict_proba_bits(bits)

    def predict_proba_bits(self, bits: np.ndarray) -> np.ndarray:
        bits = np.atleast_2d(bits).astype(float)
        logit = np.full(bits.shape[0], self.second_layer_bias)
        for sub, w in zip(self.subscales, self.second_layer_weights):
            cols = sub.columns()
            beta = np.array([sub.coefficients[c] for c in cols])
            pts = bits[:, cols] @ beta + sub.bias
            logit = logit + w * sigmoid(pts)
        return sigmoid(logit)

    def model_labels(self, bits: np.ndarray, threshold: float = 0.5) -> np.ndarray:
        """Hard labels of the model on a binarized dataset (threshold 0.5)."""
        return (self.predict_proba_bits(bits) >= threshold).astype(np.int8)

    # -- variable importance --------------------------------------------

    def _important_factors(self, bits, breakdown, n_subscales=2, n_factors=2):
        order = sorted(
            range(len(breakdown)), key=lambda k: -breakdown[k].weighted
        )  # stable: ties keep declaration order
        factors = []
        for k in order[:n_subscales]:
            sub = self.subscales[k]
            active = [
                (col, sub.coefficients[col])
                for col in sub.columns()
                if bits[col] and sub.coefficients[col] != 0.0
            ]
            active.sort(key=lambda cv: -cv[1])  # stable: ties by column order
            for col, coef in active[:n_factors]:
                factors.append(
                    ImportantFactor(self.binarizer.column_name(col), sub.name, coef)
                )
        return factors

    def variable_importance(self, raw_row, n_subscales=2, n_factors=2):
        bits = self.binarizer.binarize_row(raw_row)
        breakdown = []
        for sub, w in zip(self.subscales, self.second_layer_weights):
            pts, risk = self.subscale_risk(sub, bits)
            breakdown.append(SubscaleScore(sub.name, pts, risk, float(w)))
        return self._important_factors(bits, breakdown, n_subscales, n_factors)

    # -- scoring table ---------------------------------------------------

    def to_scoring_table(self, subscale: Subscale, p: int) -> ScoringTable:
        if p not in subscale.feature_indices:
            raise FeatureNotInSubscale(
                f"feature {p} not in subscale {subscale.name!r}"
            )
        spec = self.binarizer.specs[p]
        cols = list(self.binarizer.feature_columns(p))
        thr_cols = cols[: len(spec.thresholds)]
        nm_coef = 0.0
        if spec.include_not_missing_indicator:
            nm_coef = subscale.coefficients.get(cols[-1], 0.0)
        betas = [subscale.coefficients.get(c, 0.0) for c in thr_cols]
        increasing = spec.monotonicity == Monotonicity.INCREASING
        ts = spec.thresholds
        rows = []
        # Interval j lies between thresholds j-1 and j. Points are accumulated
        # in ascending-threshold order, NotMissing last, matching the direct
        # step-function summation order exactly.
        for j in range(len(ts) + 1):
            pts = 0.0
            for i, b in enumerate(betas):
                active = (j > i) if increasing else (j <= i)
                if active:
                    pts += b
            pts += nm_coef
            lo = ts[j - 1] if j > 0 else None
            hi = ts[j] if j < len(ts) else None
            # Decreasing uses 1[x < t]: interval closed at the lower threshold.
            # Increasing uses 1[x > t]: open at the lower threshold.
            rows.append(ScoringRow(lo, hi, lo_closed=not increasing, points=pts))
        return ScoringTable(spec.name, rows, missing_points=0.0)

    def feature_score(self, subscale: Subscale, p: int, raw) -> float:
        """Direct step-function sum for one feature (the un-rewritten form)."""
        if p not in subscale.feature_indices:
            raise FeatureNotInSubscale(
                f"feature {p} not in subscale {subscale.name!r}"
            )
        spec = self.binarizer.specs[p]
        bits = self.binarizer.binarize_value(spec, raw)
        cols = list(self.binarizer.feature_columns(p))
        pts = 0.0
        for i, col in enumerate(cols):
            if bits[i]:
                pts += subscale.coefficients.get(col, 0.0)
        return pts

    # -- serialization ---------------------------------------------------

    def to_document(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "features": [
                {
                    "name": s.name,
                    "monotonicity": s.monotonicity.value,
                    "thresholds": list(s.thresholds),
                    "missing_codes": sorted(s.missing_codes),
                    "not_missing_indicator": s.include_not_missing_indicator,
                }
                for s in self.binarizer.specs
            ],
            "subscales": [
                {
                    "name": sub.name,
                    "features": list(sub.feature_indices),
                    "coefficients": {str(c): v for c, v in sorted(sub.coefficients.items())},
                    "bias": sub.bias,
                }
                for sub in self.subscales
            ],
            "second_layer": {
                "weights": self.second_layer_weights.tolist(),
                "bias": self.second_layer_bias,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_document(), indent=2)

    @property
    def model_hash(self) -> str:
        doc = json.dumps(self.to_document(), sort_keys=True)
        return hashlib.sha256(doc.encode()).hexdigest()[:16]

    @classmethod
    def from_document(cls, doc: dict) -> "ArmModel":
        if not isinstance(doc, dict):
            raise MalformedDocument("model document must be a JSON object")
        version = doc.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaVersionMismatch(f"unsupported schema version {version!r}")
        try:
            specs = [
                FeatureSpec(
                    name=f["name"],
                    monotonicity=Monotonicity(f["monotonicity"]),
                    thresholds=tuple(f["thresholds"]),
                    missing_codes=frozenset(f["missing_codes"]),
                    include_not_missing_indicator=f["not_missing_indicator"],
                )
                for f in doc["features"]
            ]
            subscales = [
                Subscale(
                    name=s["name"],
                    feature_indices=tuple(s["features"]),
                    coefficients={int(c): v for c, v in s["coefficients"].items()},
                    bias=float(s["bias"]),
                )
                for s in doc["subscales"]
            ]
            weights = doc["second_layer"]["weights"]
            bias = float(doc["second_layer"]["bias"])
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedDocument(f"bad model document: {exc}") from exc
        return cls(Binarizer(specs), subscales, weights, bias)

    @classmethod
    def from_json(cls, text: str) -> "ArmModel":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MalformedDocument(f"invalid JSON: {exc}") from exc
        return cls.from_document(doc)


def scoring_table_csv(model: ArmModel, subscale: Subscale) -> str:
    """Plain-text export of a subscale's scoring tables (interval, points)."""
    lines = [f"# subscale: {subscale.name}"]
    for p in subscale.feature_indices:
        table = model.to_scoring_table(subscale, p)
        lines.append(f"feature,{table.feature_name}")
        lines.append("interval,points")
        for row in table.rows:
            lines.append(f"{row.label(table.feature_name)},{row.points:.6f}")
        lines.append(f"Missing,{table.missing_points:.6f}")
    return "\n".join(lines) + "\n"
