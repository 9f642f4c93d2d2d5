"""Case-based explanations: prior cases satisfying the query's rule, ranked
by shared binary features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .setcover import DatasetIndex, Rule, _mask_bits


@dataclass
class SimilarCase:
    row_index: int
    raw_values: dict
    model_label: int
    shared_feature_count: int


def similar_cases(x_bits, rule: Rule, index: DatasetIndex, dataset,
                  k: int = 5, exclude_row: int | None = None) -> list:
    """Top-k dataset rows satisfying the rule, ranked by the number of
    original (non-complement) binary features shared with the query; ties
    broken by ascending row index. Complements are excluded from the score
    since their agreement is implied by the originals'.
    """
    x_bits = np.asarray(x_bits, dtype=np.uint8)
    n_orig = index.n_cols // 2
    sat = index.satisfying_mask(rule.features)
    rows = _mask_bits(sat)
    if exclude_row is not None:
        rows = [r for r in rows if r != exclude_row]
    query = x_bits[:n_orig]
    scored = []
    for r in rows:
        shared = int(np.sum(index.bits[r, :n_orig] == query))
        scored.append((-shared, r))
    scored.sort()
    out = []
    for neg_shared, r in scored[:k]:
        out.append(
            SimilarCase(
                row_index=r,
                raw_values=dataset.row_dict(r),
                model_label=int(index.labels[r]),
                shared_feature_count=-neg_shared,
            )
        )
    return out
