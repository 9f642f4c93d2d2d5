"""Exception types shared across the package."""


class ArmError(Exception):
    """Base class for all armkit errors."""


class ColumnCountMismatch(ArmError):
    """A raw row or matrix does not match the binarizer's feature count."""


class FeatureNotInSubscale(ArmError):
    """Requested a scoring table for a feature outside the subscale."""


class SchemaVersionMismatch(ArmError):
    """Model document carries an unsupported schema version."""


class MalformedDocument(ArmError):
    """Model document cannot be parsed or is missing required fields."""


class NonConvergence(ArmError):
    """Optimizer hit the iteration cap with the KKT residual above tolerance."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class SingleClassDataset(ArmError):
    """Dataset contains only one label value."""


class MissingColumn(ArmError):
    """CSV header lacks a column required by the schema."""


class UnparsableValue(ArmError):
    """CSV cell could not be parsed as a number."""

    def __init__(self, row, col, value):
        super().__init__(f"unparsable value {value!r} at row {row}, column {col!r}")
        self.row = row
        self.col = col
        self.value = value


class UnknownLabelValue(ArmError):
    """Label column contains a value outside the configured mapping."""


class DegenerateSpec(ArmError):
    """Synthetic generator produced a single-class dataset repeatedly."""


class InfeasibleExplanation(ArmError):
    """An opposite-label row matches the query on every candidate feature."""


class InfeasibleSparsityCap(ArmError):
    """MAX_SPARSITY is below the minimum feasible rule size."""


class OutlierError(ArmError):
    """No consistent rule of sufficient support characterizes the observation."""

    def __init__(self, message="the observation is an outlier; there is no rule characterizing it"):
        super().__init__(message)
