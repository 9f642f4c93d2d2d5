"""Dataset ingestion, schema config, synthetic generation, split management."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateSpec,
    MissingColumn,
    SingleClassDataset,
    UnknownLabelValue,
    UnparsableValue,
)
from .model import Monotonicity

DEFAULT_MISSING_CODES = (-7.0, -8.0, -9.0)


@dataclass
class FeatureInfo:
    name: str
    monotonicity: Monotonicity = Monotonicity.NONE
    lo: float = 0.0          # realistic range, used by the synthetic generator
    hi: float = 100.0
    gen_weight: float = 0.0  # signed logit coefficient for synthetic labels

    def __post_init__(self):
        self.monotonicity = Monotonicity(self.monotonicity)


@dataclass
class Schema:
    """Feature list, monotone directions, subscale grouping, label mapping."""

    features: list               # list[FeatureInfo]
    subscale_groups: dict        # subscale name -> list of feature names
    label_column: str = "RiskPerformance"
    label_mapping: dict = field(default_factory=lambda: {"Bad": 1, "Good": 0})
    missing_codes: tuple = DEFAULT_MISSING_CODES

    def __post_init__(self):
        names = [f.name for f in self.features]
        grouped = [n for group in self.subscale_groups.values() for n in group]
        if sorted(grouped) != sorted(names):
            raise ValueError("subscale groups must partition the feature list")
        for group in self.subscale_groups.values():
            if not 1 <= len(group) <= 4:
                raise ValueError("each subscale holds 1 to 4 features")
        self._index = {n: i for i, n in enumerate(names)}

    @property
    def feature_names(self):
        return [f.name for f in self.features]

    def feature_index(self, name: str) -> int:
        return self._index[name]

    def to_document(self) -> dict:
        return {
            "features": [
                {
                    "name": f.name,
                    "monotonicity": f.monotonicity.value,
                    "range": [f.lo, f.hi],
                    "gen_weight": f.gen_weight,
                }
                for f in self.features
            ],
            "subscales": self.subscale_groups,
            "label_column": self.label_column,
            "label_mapping": self.label_mapping,
            "missing_codes": list(self.missing_codes),
        }

    @classmethod
    def from_document(cls, doc: dict) -> "Schema":
        feats = [
            FeatureInfo(
                name=f["name"],
                monotonicity=Monotonicity(f.get("monotonicity", "none")),
                lo=f.get("range", [0, 100])[0],
                hi=f.get("range", [0, 100])[1],
                gen_weight=f.get("gen_weight", 0.0),
            )
            for f in doc["features"]
        ]
        return cls(
            features=feats,
            subscale_groups={k: list(v) for k, v in doc["subscales"].items()},
            label_column=doc.get("label_column", "RiskPerformance"),
            label_mapping=doc.get("label_mapping", {"Bad": 1, "Good": 0}),
            missing_codes=tuple(doc.get("missing_codes", DEFAULT_MISSING_CODES)),
        )

    @classmethod
    def from_json_file(cls, path) -> "Schema":
        with open(path) as fh:
            return cls.from_document(json.load(fh))


def fico_schema() -> Schema:
    """The 23-feature HELOC schema: directions from the challenge data
    dictionary, features grouped into 10 subscales by data-dictionary category.
    """
    d, i, n = Monotonicity.DECREASING, Monotonicity.INCREASING, Monotonicity.NONE
    feats = [
        FeatureInfo("ExternalRiskEstimate", d, 30, 95, -2.6),
        FeatureInfo("MSinceOldestTradeOpen", d, 2, 400, -0.9),
        FeatureInfo("MSinceMostRecentTradeOpen", d, 0, 120, -0.4),
        FeatureInfo("AverageMInFile", d, 4, 200, -1.1),
        FeatureInfo("NumSatisfactoryTrades", d, 0, 60, -0.8),
        FeatureInfo("NumTrades60Ever2DerogPubRec", i, 0, 12, 0.7),
        FeatureInfo("NumTrades90Ever2DerogPubRec", i, 0, 10, 0.5),
        FeatureInfo("PercentTradesNeverDelq", d, 20, 100, -1.5),
        FeatureInfo("MSinceMostRecentDelq", d, 0, 84, -0.6),
        FeatureInfo("MaxDelq2PublicRecLast12M", d, 0, 9, -1.2),
        FeatureInfo("MaxDelqEver", d, 1, 9, -0.7),
        FeatureInfo("NumTotalTrades", n, 0, 80, 0.0),
        FeatureInfo("NumTradesOpeninLast12M", i, 0, 12, 0.5),
        FeatureInfo("PercentInstallTrades", n, 0, 100, 0.0),
        FeatureInfo("MSinceMostRecentInqexcl7days", d, 0, 24, -0.5),
        FeatureInfo("NumInqLast6M", i, 0, 15, 0.8),
        FeatureInfo("NumInqLast6Mexcl7days", i, 0, 15, 0.4),
        FeatureInfo("NetFractionRevolvingBurden", i, 0, 180, 1.6),
        FeatureInfo("NetFractionInstallBurden", i, 0, 250, 0.6),
        FeatureInfo("NumRevolvingTradesWBalance", n, 0, 25, 0.0),
        FeatureInfo("NumInstallTradesWBalance", n, 1, 20, 0.0),
        FeatureInfo("NumBank2NatlTradesWHighUtilization", i, 0, 12, 0.9),
        FeatureInfo("PercentTradesWBalance", n, 0, 100, 0.0),
    ]
    groups = {
        "ExternalRiskEstimate": ["ExternalRiskEstimate"],
        "TradeOpenTime": [
            "MSinceOldestTradeOpen",
            "MSinceMostRecentTradeOpen",
            "AverageMInFile",
        ],
        "TradeFrequency": [
            "NumSatisfactoryTrades",
            "NumTotalTrades",
            "NumTradesOpeninLast12M",
        ],
        "Delinquency": [
            "PercentTradesNeverDelq",
            "MSinceMostRecentDelq",
            "MaxDelq2PublicRecLast12M",
            "MaxDelqEver",
        ],
        "Derogatory": [
            "NumTrades60Ever2DerogPubRec",
            "NumTrades90Ever2DerogPubRec",
        ],
        "Installment": [
            "PercentInstallTrades",
            "NetFractionInstallBurden",
            "NumInstallTradesWBalance",
        ],
        "Inquiry": [
            "MSinceMostRecentInqexcl7days",
            "NumInqLast6M",
            "NumInqLast6Mexcl7days",
        ],
        "RevolvingBalance": [
            "NetFractionRevolvingBurden",
            "NumRevolvingTradesWBalance",
        ],
        "Utilization": ["NumBank2NatlTradesWHighUtilization"],
        "TradeWBalance": ["PercentTradesWBalance"],
    }
    return Schema(features=feats, subscale_groups=groups)


@dataclass
class RawDataset:
    feature_names: list
    X: np.ndarray        # N x P floats; missing codes kept as-is
    y: np.ndarray        # N ints in {0,1}

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=np.int8)

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    def row_dict(self, i: int) -> dict:
        return dict(zip(self.feature_names, self.X[i].tolist()))


def load_csv(path_or_buffer, schema: Schema) -> RawDataset:
    """Read a header-bearing CSV into a RawDataset (order-insensitive header)."""
    if hasattr(path_or_buffer, "read"):
        fh = path_or_buffer
        close = False
    else:
        fh = open(path_or_buffer, newline="")
        close = True
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise MissingColumn("empty file")
        header = [h.strip() for h in header]
        col_of = {h: j for j, h in enumerate(header)}
        missing = [n for n in schema.feature_names + [schema.label_column] if n not in col_of]
        if missing:
            raise MissingColumn(f"missing columns: {', '.join(missing)}")
        fcols = [col_of[n] for n in schema.feature_names]
        lcol = col_of[schema.label_column]
        rows, labels = [], []
        for r, rec in enumerate(reader):
            vals = []
            for n, j in zip(schema.feature_names, fcols):
                try:
                    vals.append(float(rec[j]))
                except (ValueError, IndexError):
                    raise UnparsableValue(r, n, rec[j] if j < len(rec) else None)
            raw_label = rec[lcol].strip()
            if raw_label in schema.label_mapping:
                labels.append(int(schema.label_mapping[raw_label]))
            elif raw_label in ("0", "1"):
                labels.append(int(raw_label))
            else:
                raise UnknownLabelValue(f"row {r}: label {raw_label!r}")
            rows.append(vals)
        X = np.array(rows, dtype=float) if rows else np.zeros((0, len(fcols)))
        return RawDataset(list(schema.feature_names), X, np.array(labels, dtype=np.int8))
    finally:
        if close:
            fh.close()


def write_csv(dataset: RawDataset, path_or_buffer, label_column="RiskPerformance",
              label_mapping=None):
    """Inverse of load_csv; numeric labels unless a mapping is given."""
    inv = {v: k for k, v in (label_mapping or {}).items()}
    if hasattr(path_or_buffer, "write"):
        fh = path_or_buffer
        close = False
    else:
        fh = open(path_or_buffer, "w", newline="")
        close = True
    try:
        w = csv.writer(fh)
        w.writerow([label_column] + dataset.feature_names)
        for i in range(dataset.n_rows):
            label = inv.get(int(dataset.y[i]), int(dataset.y[i]))
            w.writerow([label] + [_fmt(v) for v in dataset.X[i]])
    finally:
        if close:
            fh.close()


def _fmt(v: float) -> str:
    return repr(int(v)) if float(v).is_integer() else repr(float(v))


@dataclass
class SyntheticSpec:
    """Controls the FICO-stand-in generator.

    Labels are Bernoulli draws from a sigmoid of a monotone logit whose signed
    coefficients come from the schema; `temperature` scales the logit (lower =
    noisier labels, more boundary-region rows).
    """

    n_rows: int = 1000
    seed: int = 0
    missing_rate: float = 0.02
    temperature: float = 1.0
    schema: Schema = field(default_factory=fico_schema)
    max_resamples: int = 10


def generate_synthetic(spec: SyntheticSpec) -> RawDataset:
    rng = np.random.default_rng(spec.seed)
    for _ in range(spec.max_resamples):
        X, y = _sample_once(spec, rng)
        if y.min() != y.max():
            return RawDataset(spec.schema.feature_names, X, y)
    raise DegenerateSpec("generator produced a single class repeatedly")


def _sample_once(spec: SyntheticSpec, rng):
    n = spec.n_rows
    feats = spec.schema.features
    X = np.zeros((n, len(feats)))
    z = np.zeros(n)
    for j, f in enumerate(feats):
        # Piecewise-uniform marginal: a dense central segment plus tails.
        seg = rng.random(n)
        span = f.hi - f.lo
        vals = np.where(
            seg < 0.6,
            rng.uniform(f.lo + 0.2 * span, f.lo + 0.8 * span, n),
            rng.uniform(f.lo, f.hi, n),
        )
        vals = np.round(vals)
        X[:, j] = vals
        centered = (vals - (f.lo + 0.5 * span)) / (0.5 * span)
        z += f.gen_weight * centered
    z = spec.temperature * z
    z -= np.median(z)  # keeps classes near 50/50
    prob = 1.0 / (1.0 + np.exp(-z))
    y = (rng.random(n) < prob).astype(np.int8)
    if spec.missing_rate > 0:
        mask = rng.random(X.shape) < spec.missing_rate
        X[mask] = -9.0
    return X, y


def split(dataset: RawDataset, test_frac: float = 0.2, n_splits: int = 5, seed: int = 0):
    """Random (unstratified) train/test index partitions, deterministic by seed."""
    if dataset.n_rows < 10:
        raise ValueError("need at least 10 rows to split")
    if dataset.y.min() == dataset.y.max():
        raise SingleClassDataset("both classes required for splitting")
    rng = np.random.default_rng(seed)
    n_test = int(round(dataset.n_rows * test_frac))
    out = []
    for _ in range(n_splits):
        perm = rng.permutation(dataset.n_rows)
        out.append((np.sort(perm[n_test:]), np.sort(perm[:n_test])))
    return out


def dataset_hash(dataset: RawDataset) -> str:
    import hashlib

    h = hashlib.sha256()
    h.update(",".join(dataset.feature_names).encode())
    h.update(np.ascontiguousarray(dataset.X).tobytes())
    h.update(np.ascontiguousarray(dataset.y).tobytes())
    return h.hexdigest()[:16]
