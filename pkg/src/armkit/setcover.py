"""Globally-consistent conjunctive summary-explanations via exact set cover.

A rule is a conjunction of binary features (including complements) that is
true of the explained observation and whose satisfying dataset rows all carry
the same model label. Finding the fewest conjuncts is a minimum set cover over
the opposite-label rows; support maximization adds a cardinality cap. Both are
solved exactly by an in-house branch and bound over bitmask row sets, with the
classical greedy cover as warm start.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InfeasibleExplanation,
    InfeasibleSparsityCap,
    OutlierError,
)

RULE_SETTINGS = ("max_sparsity", "support+0", "support+1", "support+2")


@dataclass(frozen=True)
class Rule:
    """A consistent summary-explanation: conjunction of design-matrix columns."""

    features: tuple          # global column indices into [X, X^c]
    label: int
    support: int
    exact: bool = True
    lower_bound: int | None = None

    @property
    def sparsity(self) -> int:
        return len(self.features)

    def render(self, binarizer) -> str:
        if not self.features:
            conj = "(no conditions)"
        else:
            conj = " AND ".join(binarizer.column_name(c) for c in self.features)
        outcome = "high risk" if self.label == 1 else "low risk"
        return f"{conj} ⇒ {outcome}, supported by {self.support} prior cases"


@dataclass
class SolverBudget:
    time_limit: float = 7.0
    node_limit: int = 10_000_000
    gap_tolerance: int = 0


class _Budget:
    _CHECK_EVERY = 256

    def __init__(self, budget: SolverBudget):
        self.deadline = time.monotonic() + budget.time_limit
        self.nodes_left = budget.node_limit
        self.gap = budget.gap_tolerance
        self.exhausted = False
        self._countdown = self._CHECK_EVERY

    def tick(self) -> bool:
        self.nodes_left -= 1
        if self.nodes_left <= 0:
            self.exhausted = True
            return True
        self._countdown -= 1
        if self._countdown <= 0:
            self._countdown = self._CHECK_EVERY
            if time.monotonic() > self.deadline:
                self.exhausted = True
        return self.exhausted


def _col_mask(col: np.ndarray) -> int:
    """Rows where the column is 0 (the cover set A_p), packed into an int."""
    packed = np.packbits(col == 0, bitorder="little")
    return int.from_bytes(packed.tobytes(), "little")


class DatasetIndex:
    """Precomputed bitmask structures for one (binarized dataset, model labels)
    pair; shared across all explanation queries."""

    def __init__(self, bits: np.ndarray, model_labels: np.ndarray, model=None):
        self.model = model
        self.bits = np.asarray(bits, dtype=np.uint8)
        self.labels = np.asarray(model_labels, dtype=np.int8)
        self.n_rows, self.n_cols = self.bits.shape
        self.zero_masks = [_col_mask(self.bits[:, c]) for c in range(self.n_cols)]
        self.all_rows = (1 << self.n_rows) - 1
        # label_masks[lab]: bitmask of rows whose model label differs from lab.
        self.label_masks = {
            lab: _col_mask((self.labels == lab).astype(np.uint8))
            for lab in (0, 1)
        }

    def satisfying_mask(self, features) -> int:
        """Rows where every feature in the conjunction is 1."""
        m = self.all_rows
        for c in features:
            m &= self.all_rows ^ self.zero_masks[c]
        return m

    def support(self, features) -> int:
        return self.satisfying_mask(features).bit_count()


def pattern_key(x_bits: np.ndarray) -> str:
    return np.packbits(np.asarray(x_bits, dtype=np.uint8)).tobytes().hex()


class ExplainContext:
    """Per-query candidate features and cover structure.

    Candidates are the columns true for the query; each candidate p covers the
    opposite-label rows where that column is 0 (those rows then cannot satisfy
    the rule). Opposite rows with identical candidate coverage collapse into
    one weighted requirement, and requirements whose candidate set contains
    another's are dropped (covering the smaller one covers them too).
    """

    def __init__(self, x_bits: np.ndarray, index: DatasetIndex, y_e: int):
        x_bits = np.asarray(x_bits, dtype=np.uint8)
        if x_bits.shape != (index.n_cols,):
            raise ValueError("query pattern has wrong column count")
        self.index = index
        self.y_e = int(y_e)
        self.x_bits = x_bits
        self.candidates = [c for c in range(index.n_cols) if x_bits[c]]
        self.opp_mask = index.label_masks[self.y_e]  # rows with y^M != y_e
        # Cover sets restricted to opposite-label rows.
        self.cover = [index.zero_masks[c] & self.opp_mask for c in self.candidates]
        opp_rows = np.array(_mask_bits(self.opp_mask), dtype=np.int64)
        if len(opp_rows):
            Z = index.bits[np.ix_(opp_rows, np.array(self.candidates))] == 0
            if not Z.any(axis=1).all():
                raise InfeasibleExplanation(
                    "an opposite-label row matches the query on every candidate feature"
                )
            uniq = np.unique(Z, axis=0)
        else:
            uniq = np.zeros((0, len(self.candidates)), dtype=bool)
        # Minimality filter: a requirement whose candidate set contains a
        # smaller requirement's is implied by it and redundant for covering.
        # Checking every pair is quadratic, so only the scarcest requirements
        # (which imply the most others) are used as filters; keeping an
        # implied requirement is harmless for correctness.
        order = np.argsort(uniq.sum(axis=1), kind="stable")
        uniq = uniq[order]
        keep = np.ones(len(uniq), dtype=bool)
        for r in range(min(len(uniq), 128)):
            if not keep[r]:
                continue
            superset = np.all(uniq[:, uniq[r]], axis=1)
            superset[: r + 1] = False
            keep &= ~superset
        uniq = uniq[keep]
        # candidate-bitmask per requirement (in ascending-scarcity order, so
        # the lowest uncovered bit is always a scarcest requirement), and the
        # transpose: the requirement-bitmask each candidate covers.
        self.req_masks = [_bits_to_mask(row) for row in uniq]
        self.n_req = len(self.req_masks)
        self.all_req = (1 << self.n_req) - 1
        self.cover_req = [_bits_to_mask(col) for col in uniq.T]

    @property
    def n_rows(self) -> int:
        return self.index.n_rows

    def full_zero(self, i_local: int) -> int:
        return self.index.zero_masks[self.candidates[i_local]]

    def make_rule(self, selected, exact=True, lower_bound=None) -> Rule:
        feats = tuple(sorted(self.candidates[i] for i in selected))
        return Rule(feats, self.y_e, self.index.support(feats), exact, lower_bound)


def build_context(x_bits, index: DatasetIndex, y_e: int) -> ExplainContext:
    return ExplainContext(x_bits, index, y_e)


# -- greedy --------------------------------------------------------------


def greedy_cover(ctx: ExplainContext) -> Rule:
    """Classical greedy cover; ties by larger |A_p| over all rows, then lower
    column index. Used as warm start and incumbent for both exact solvers."""
    selected = _greedy_selection(ctx)
    return ctx.make_rule(selected)


def _greedy_selection(ctx: ExplainContext) -> list:
    uncovered = ctx.opp_mask
    selected = []
    while uncovered:
        best, best_key = None, None
        for i, m in enumerate(ctx.cover):
            gain = (m & uncovered).bit_count()
            if gain == 0:
                continue
            key = (gain, ctx.full_zero(i).bit_count(), -i)
            if best_key is None or key > best_key:
                best, best_key = i, key
        uncovered &= ~ctx.cover[best]
        selected.append(best)
    return selected


# -- lower bound ---------------------------------------------------------


def _matching_bound(req_masks, uncovered, limit=None) -> int:
    """Number of pairwise candidate-disjoint uncovered requirements: any
    cover spends one distinct candidate per requirement in the matching.
    Stops early once `limit` is exceeded."""
    used = 0
    count = 0
    m = uncovered
    while m:
        low = m & -m
        r = low.bit_length() - 1
        m ^= low
        cands = req_masks[r]
        if cands & used == 0:
            used |= cands
            count += 1
            if limit is not None and count > limit:
                return count
    return count


def _dominance_filter(ctx: ExplainContext, allowed=None) -> list:
    """Candidate i is dropped when some j covers a superset of i's opposite
    rows and has presence (support contribution) at least as large. Exact
    dominance only; preserves max-sparsity optimality."""
    n = len(ctx.candidates)
    allowed = range(n) if allowed is None else allowed
    presence = {i: ctx.n_rows - ctx.full_zero(i).bit_count() for i in allowed}
    keep = []
    for i in allowed:
        dominated = False
        for j in allowed:
            if i == j:
                continue
            if ctx.cover[i] & ~ctx.cover[j]:
                continue
            if presence[j] < presence[i]:
                continue
            if ctx.cover[i] == ctx.cover[j] and presence[i] == presence[j] and j > i:
                continue  # symmetric tie: keep the lower index
            dominated = True
            break
        if not dominated:
            keep.append(i)
    return keep


def _mask_bits(mask: int) -> list:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def _bits_to_mask(bits) -> int:
    packed = np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="little")
    return int.from_bytes(packed.tobytes(), "little")


# -- exact solvers -------------------------------------------------------
#
# Both solvers use lazy constraint generation: branch and bound over a small
# active subset of requirements, then test the subset optimum against the full
# requirement set. A violated requirement is added and the search repeats; once
# the subset optimum is feasible it is the global optimum, because the subset
# problem is a relaxation. In practice a handful of requirements are binding,
# so each inner search is tiny.


def _scarcest(req_masks, req_indices, k) -> list:
    """The k requirements with the fewest covering candidates."""
    return sorted(req_indices, key=lambda r: req_masks[r].bit_count())[:k]


_SEED_REQS = 16
_GROW_REQS = 8


def _sub_structures(ctx: ExplainContext, active):
    """Requirement masks and per-candidate coverage restricted to `active`,
    in ascending-scarcity order so the lowest uncovered bit is scarcest."""
    active.sort(key=lambda r: ctx.req_masks[r].bit_count())
    sub_masks = [ctx.req_masks[r] for r in active]
    sub_cover = {}
    for j, m in enumerate(sub_masks):
        for i in _mask_bits(m):
            sub_cover[i] = sub_cover.get(i, 0) | (1 << j)
    return sub_masks, sub_cover


def _violated(ctx: ExplainContext, selected) -> list:
    covered = 0
    for i in selected:
        covered |= ctx.cover_req[i]
    return _mask_bits(ctx.all_req & ~covered)


def solve_max_sparsity(ctx: ExplainContext, budget: SolverBudget | None = None) -> Rule:
    """Minimum-cardinality consistent rule, by branch and bound on the set
    cover over the deduplicated opposite-row requirements."""
    budget = budget or SolverBudget()
    if not ctx.opp_mask:
        return ctx.make_rule([])
    b = _Budget(budget)
    keep = set(_dominance_filter(ctx))
    dropped = 0
    for i in range(len(ctx.candidates)):
        if i not in keep:
            dropped |= 1 << i
    best = _greedy_selection(ctx)
    best_len = len(best)

    active = _scarcest(ctx.req_masks, range(ctx.n_req), _SEED_REQS)
    active_set = set(active)
    while True:
        sub_masks, sub_cover = _sub_structures(ctx, active)
        all_sub = (1 << len(active)) - 1
        found = None

        def dfs(selected, uncovered):
            nonlocal found, best_len
            if b.exhausted or b.tick():
                return
            if not uncovered:
                found, best_len = list(selected), len(selected)
                return
            lb = _matching_bound(sub_masks, uncovered, limit=best_len - len(selected))
            if len(selected) + max(lb, 1) >= best_len:
                return
            r = (uncovered & -uncovered).bit_length() - 1
            opts = _mask_bits(sub_masks[r] & ~dropped)
            opts.sort(key=lambda i: -(sub_cover[i] & uncovered).bit_count())
            for i in opts:
                selected.append(i)
                dfs(selected, uncovered & ~sub_cover[i])
                selected.pop()

        dfs([], all_sub)
        if b.exhausted:
            lb = _matching_bound(ctx.req_masks, ctx.all_req)
            return ctx.make_rule(best, exact=False, lower_bound=lb)
        if found is None:
            return ctx.make_rule(best)
        missing = _violated(ctx, found)
        if not missing:
            return ctx.make_rule(found)
        # The subset optimum misses some requirements: tighten and resolve.
        best_len = len(best)
        fresh = [r for r in missing if r not in active_set]
        for r in _scarcest(ctx.req_masks, fresh, _GROW_REQS):
            active.append(r)
            active_set.add(r)


def solve_max_support(ctx: ExplainContext, max_sparsity: int,
                      budget: SolverBudget | None = None,
                      warm_rule: Rule | None = None) -> Rule:
    """Support-maximal consistent rule of at most max_sparsity conjuncts.

    Adding a conjunct never increases support, and every opposite-label row is
    excluded by any feasible rule, so N - |opposite| - |same-label exclusions
    so far| is a monotone upper bound used for pruning. Column dominance is
    disabled here: it is not support-safe.
    """
    budget = budget or SolverBudget()
    if not ctx.opp_mask:
        return ctx.make_rule([])
    b = _Budget(budget)
    n_opp = ctx.opp_mask.bit_count()
    same_mask = ctx.index.all_rows ^ ctx.opp_mask
    same_zero = [ctx.full_zero(i) & same_mask for i in range(len(ctx.candidates))]
    support_cap = ctx.n_rows - n_opp

    incumbent = _greedy_selection(ctx)
    if len(incumbent) > max_sparsity:
        sparsest = solve_max_sparsity(ctx, budget)
        if sparsest.sparsity > max_sparsity:
            raise InfeasibleSparsityCap(
                f"minimum feasible sparsity {sparsest.sparsity} exceeds cap {max_sparsity}"
            )
        incumbent = [ctx.candidates.index(c) for c in sparsest.features]
    best = list(incumbent)
    best_support = ctx.make_rule(best).support
    if warm_rule is not None and warm_rule.sparsity <= max_sparsity \
            and warm_rule.support > best_support:
        best = [ctx.candidates.index(c) for c in warm_rule.features]
        best_support = warm_rule.support
    req_masks = ctx.req_masks
    cover_req = ctx.cover_req
    exact = True

    def dfs(selected, uncovered, union_same):
        nonlocal best, best_support, exact
        if b.exhausted or b.tick():
            exact = False
            return
        if not uncovered:
            s = support_cap - union_same.bit_count()
            if s > best_support:
                best, best_support = list(selected), s
            return
        if len(selected) >= max_sparsity:
            return
        cap_here = support_cap - union_same.bit_count()
        if cap_here <= best_support:
            return
        room = max_sparsity - len(selected)
        if _matching_bound(req_masks, uncovered, limit=room) > room:
            return
        r = (uncovered & -uncovered).bit_length() - 1
        # Covering r excludes at least the cheapest option's fresh same-label
        # rows; options whose own exclusion already drops the ceiling below
        # the incumbent cannot appear in a better rule, so the ascending sort
        # lets the loop stop at the first such option.
        opts = [(((same_zero[i] | union_same).bit_count()), i)
                for i in _mask_bits(req_masks[r])]
        opts.sort()
        for union_pop, i in opts:
            if support_cap - union_pop <= best_support:
                break
            selected.append(i)
            dfs(selected, uncovered & ~cover_req[i], union_same | same_zero[i])
            selected.pop()

    dfs([], ctx.all_req, 0)
    return ctx.make_rule(best, exact=exact)


# -- verification --------------------------------------------------------


@dataclass
class Verification:
    consistent: bool
    support: int
    counterexamples: list


def verify_rule(rule: Rule, index: DatasetIndex) -> Verification:
    """Exhaustive consistency and support check against the dataset."""
    sat = index.satisfying_mask(rule.features)
    support = sat.bit_count()
    bad = sat & index.label_masks[rule.label]  # satisfying rows with y^M != label
    counterexamples = _mask_bits(bad)
    return Verification(not counterexamples, support, counterexamples)


# -- explanation database ------------------------------------------------


@dataclass
class DbEntry:
    rules: dict = field(default_factory=dict)   # setting name -> Rule
    error: str | None = None


DB_SCHEMA_VERSION = 1


class ExplanationDb:
    """Cached rules per binarized pattern at the four optimization settings."""

    def __init__(self, model_hash: str = "", dataset_hash: str = ""):
        self.model_hash = model_hash
        self.dataset_hash = dataset_hash
        self.entries: dict[str, DbEntry] = {}

    def get(self, key: str) -> DbEntry | None:
        return self.entries.get(key)

    def to_document(self) -> dict:
        def rule_doc(r: Rule):
            return {
                "features": list(r.features),
                "label": r.label,
                "support": r.support,
                "exact": r.exact,
            }
        return {
            "schema_version": DB_SCHEMA_VERSION,
            "model_hash": self.model_hash,
            "dataset_hash": self.dataset_hash,
            "entries": {
                key: {
                    "rules": {s: rule_doc(r) for s, r in e.rules.items()},
                    "error": e.error,
                }
                for key, e in self.entries.items()
            },
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_document(), fh)

    @classmethod
    def from_document(cls, doc: dict) -> "ExplanationDb":
        db = cls(doc.get("model_hash", ""), doc.get("dataset_hash", ""))
        for key, e in doc.get("entries", {}).items():
            entry = DbEntry(error=e.get("error"))
            for setting, r in e.get("rules", {}).items():
                entry.rules[setting] = Rule(
                    tuple(r["features"]), int(r["label"]), int(r["support"]),
                    bool(r.get("exact", True)),
                )
            db.entries[key] = entry
        return db

    @classmethod
    def load(cls, path) -> "ExplanationDb":
        with open(path) as fh:
            return cls.from_document(json.load(fh))


def four_setting_rules(ctx: ExplainContext, budget: SolverBudget | None = None) -> dict:
    """The cached quartet: max sparsity, then max support at +0/+1/+2.

    Each relaxation is warm-started with the previous solution, so support is
    non-decreasing across relaxations even when a budget truncates a solve.
    """
    sparsest = solve_max_sparsity(ctx, budget)
    rules = {"max_sparsity": sparsest}
    prev = sparsest
    for relax in (0, 1, 2):
        prev = solve_max_support(ctx, sparsest.sparsity + relax, budget, warm_rule=prev)
        rules[f"support+{relax}"] = prev
    return rules


def sample_random_patterns(index: DatasetIndex, binarizer, n: int, seed: int = 0):
    """Random binary patterns: per-column Bernoulli at empirical marginals,
    then repaired to nested-threshold and complement consistency."""
    rng = np.random.default_rng(seed)
    n_orig = index.n_cols // 2
    marginals = index.bits[:, :n_orig].mean(axis=0) if index.n_rows else np.full(n_orig, 0.5)
    out = np.zeros((n, index.n_cols), dtype=np.uint8)
    for r in range(n):
        orig = (rng.random(n_orig) < marginals).astype(np.uint8)
        for p, spec in enumerate(binarizer.specs):
            cols = list(binarizer.feature_columns(p))
            thr = cols[: len(spec.thresholds)]
            if spec.include_not_missing_indicator and orig[cols[-1]] == 0:
                orig[thr] = 0
                continue
            # One-sided indicators are nested: repair by cumulative OR in the
            # direction of implication.
            acc = 0
            order = thr if spec.monotonicity.value == "increasing" else thr[::-1]
            for c in reversed(order):
                acc |= orig[c]
                orig[c] = acc
        out[r, :n_orig] = orig
        out[r, n_orig:] = 1 - orig
    return out


def build_explanation_db(index: DatasetIndex, binarizer=None, rows=None,
                         n_random: int = 0, seed: int = 0,
                         budget: SolverBudget | None = None,
                         db: ExplanationDb | None = None,
                         model_hash: str = "", dataset_hash: str = "",
                         progress=None) -> ExplanationDb:
    """Populate (or resume) the explanation cache for dataset rows and
    optionally extra random patterns. Per-pattern failures are recorded and
    the build continues."""
    db = db or ExplanationDb(model_hash, dataset_hash)
    patterns = []
    row_iter = range(index.n_rows) if rows is None else rows
    for i in row_iter:
        patterns.append((index.bits[i], int(index.labels[i])))
    if n_random:
        if binarizer is None:
            raise ValueError("binarizer required for random pattern sampling")
        rand = sample_random_patterns(index, binarizer, n_random, seed)
        for r in range(n_random):
            patterns.append((rand[r], None))
    for count, (bits, label) in enumerate(patterns):
        key = pattern_key(bits)
        if key in db.entries:
            continue
        try:
            y_e = label
            if y_e is None:
                y_e = _label_for_pattern(bits, index)
            ctx = ExplainContext(bits, index, y_e)
            db.entries[key] = DbEntry(rules=four_setting_rules(ctx, budget))
        except InfeasibleExplanation as exc:
            db.entries[key] = DbEntry(error=str(exc))
        if progress is not None:
            progress(count + 1, len(patterns))
    return db


def _label_for_pattern(bits, index: DatasetIndex) -> int:
    if index.model is None:
        raise ValueError("index has no model attached for novel patterns")
    return int(index.model.predict_proba_bits(np.asarray(bits)[None, :])[0] >= 0.5)


# -- deployed cascade ----------------------------------------------------


@dataclass
class ExplainResult:
    rule: Rule
    step: str                 # "db-hit" | "max-sparsity" | "support+k"
    support_threshold: int


def explain(x_bits, index: DatasetIndex, y_e: int,
            db: ExplanationDb | None = None,
            budget: SolverBudget | None = None,
            thresholds=(10, 5)) -> ExplainResult:
    """The deployed cascade: cached rule with enough support, else solve max
    sparsity, else max support at +0/+1/+2, then retry at the lower support
    threshold; finally the observation is declared an outlier.

    Every returned rule is re-verified against the current dataset first.
    """
    key = pattern_key(x_bits)
    try:
        ctx = ExplainContext(x_bits, index, y_e)
    except InfeasibleExplanation as exc:
        raise OutlierError() from exc

    cached = db.get(key) if db is not None else None
    rules_cache: dict = {}
    for threshold in thresholds:
        if cached is not None and cached.rules:
            usable = [
                r for r in cached.rules.values()
                if r.support > threshold and r.label == y_e
                and verify_rule(r, index).consistent
            ]
            if usable:
                rule = min(usable, key=lambda r: r.sparsity)
                return ExplainResult(rule, "db-hit", threshold)
        if "max_sparsity" not in rules_cache:
            rules_cache["max_sparsity"] = solve_max_sparsity(ctx, budget)
        sparsest = rules_cache["max_sparsity"]
        if sparsest.support > threshold:
            return _checked(ExplainResult(sparsest, "max-sparsity", threshold), index)
        prev = sparsest
        for relax in (0, 1, 2):
            setting = f"support+{relax}"
            if setting not in rules_cache:
                rules_cache[setting] = solve_max_support(
                    ctx, sparsest.sparsity + relax, budget, warm_rule=prev
                )
            rule = prev = rules_cache[setting]
            if rule.support > threshold:
                return _checked(ExplainResult(rule, setting, threshold), index)
    raise OutlierError()


def _checked(result: ExplainResult, index: DatasetIndex) -> ExplainResult:
    v = verify_rule(result.rule, index)
    if not v.consistent:  # pragma: no cover - solver guarantee
        raise OutlierError("solver returned an inconsistent rule")
    return result
