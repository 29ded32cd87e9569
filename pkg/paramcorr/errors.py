from typing import Iterable, Sequence


class CatalogError(Exception):
    """Raised when a catalog cannot be built or used."""

    pass


class CatalogSchemaError(CatalogError):
    """Raised when a mandatory catalog column is missing."""

    def __init__(self, column, available):
        super().__init__(
            f"Mandatory column '{column}' not found. Available columns: {list(available)}."
        )


class EmptyCatalogError(CatalogError):
    """Raised when a catalog ends up with zero valid rows."""

    def __init__(self, label, n_rejected=0):
        super().__init__(
            f"Catalog '{label}' has no valid rows ({n_rejected} rows rejected)."
        )


class MissingRedshiftError(CatalogError):
    """Raised when a redshift selection meets records without redshift."""

    def __init__(self, label, n_missing):
        super().__init__(
            f"Catalog '{label}' has {n_missing} records without redshift; "
            f"they cannot be placed in a redshift bin."
        )


class TransformError(Exception):
    """Raised when an axis transform is invalid for the data."""

    pass


class EmptyPointSetError(Exception):
    """Raised when a point set with no points is passed to a kernel."""

    pass


class BinGridMismatchError(Exception):
    """Raised when histograms on different bin grids are combined."""

    pass


class NotNormalizedError(Exception):
    """Raised when an estimator receives raw (unnormalised) pair counts."""

    pass


class AlreadyNormalizedError(Exception):
    """Raised when normalising a histogram twice."""

    pass


class SeparationOverflowError(Exception):
    """Raised when a pair separation exceeds the maximum separation ``r_max``."""

    def __init__(self, n_overflow, r_max):
        super().__init__(
            f"{n_overflow} pair separations exceed r_max={r_max!r}; "
            f"use a larger scale (e.g. the union of all pair kinds)."
        )


class FitError(Exception):
    """Raised when a power law cannot be fitted."""

    pass


class SingularCovarianceError(Exception):
    """Raised when the rank-score covariance matrix is (near-)singular."""

    def __init__(self, condition_number, variables: Sequence[str]):
        self.condition_number = condition_number
        self.variables = list(variables)
        super().__init__(
            f"Rank-score covariance matrix is singular or ill-conditioned "
            f"(condition number {condition_number:.3g}); degenerate variables: "
            f"{self.variables}."
        )


class InapplicableApproximationError(Exception):
    """Raised when the F approximation of the rank statistic does not apply."""

    def __init__(self, reason):
        super().__init__(
            f"F approximation not applicable: {reason}. "
            f"Use the permutation method instead."
        )


class NoSolutionError(Exception):
    """Raised when a merger inversion has no non-negative solution."""

    pass


class ConfigError(Exception):
    """Raised when an analysis config is invalid."""

    def __init__(self, problems: Iterable[str]):
        self.problems = list(problems)
        super().__init__("Invalid analysis config:\n  - " + "\n  - ".join(self.problems))
