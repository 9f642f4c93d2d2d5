"""Interpretable two-layer additive risk scoring with consistent rule-based
and case-based explanations."""

from .model import (
    ArmModel,
    Binarizer,
    BinaryFeature,
    BinaryKind,
    FeatureSpec,
    Monotonicity,
    Prediction,
    ScoringTable,
    Subscale,
    sigmoid,
)
from .data import (
    RawDataset,
    Schema,
    SyntheticSpec,
    fico_schema,
    generate_synthetic,
    load_csv,
    split,
    write_csv,
)
from .train import TrainConfig, evaluate, train_model
from .setcover import (
    DatasetIndex,
    DbEntry,
    ExplainContext,
    ExplainResult,
    ExplanationDb,
    Rule,
    SolverBudget,
    Verification,
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
from .cases import SimilarCase, similar_cases
from .errors import (
    ArmError,
    InfeasibleExplanation,
    InfeasibleSparsityCap,
    NonConvergence,
    OutlierError,
)

__all__ = [
    "ArmModel", "Binarizer", "BinaryFeature", "BinaryKind", "FeatureSpec",
    "Monotonicity", "Prediction", "ScoringTable", "Subscale", "sigmoid",
    "RawDataset", "Schema", "SyntheticSpec", "fico_schema",
    "generate_synthetic", "load_csv", "split", "write_csv",
    "TrainConfig", "evaluate", "train_model",
    "DatasetIndex", "DbEntry", "ExplainContext", "ExplainResult",
    "ExplanationDb", "Rule", "SolverBudget", "Verification",
    "build_context", "build_explanation_db", "explain", "four_setting_rules",
    "greedy_cover", "pattern_key", "solve_max_sparsity", "solve_max_support",
    "verify_rule",
    "SimilarCase", "similar_cases",
    "ArmError", "InfeasibleExplanation", "InfeasibleSparsityCap",
    "NonConvergence", "OutlierError",
]

__version__ = "0.1.0"
