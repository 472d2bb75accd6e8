"""Exception types shared across the package."""


class DimensionMismatchError(ValueError):
    """Input vector or matrix has a shape incompatible with its peers."""


class EmptyBasisError(ValueError):
    """A solve was requested against a basis with no columns."""


class InvalidBoxError(ValueError):
    """A bounding box has zero or negative area."""


class StaleMetricError(RuntimeError):
    """A cached inverse was used with a metric revision it was not built for."""


class NearSingularError(ArithmeticError):
    """Base class for incremental-update failures near a singular pivot.

    Callers are expected to recover by rebuilding the cache from scratch
    (the rebuild path falls back to a pseudoinverse).
    """


class NearSingularExpansionError(NearSingularError):
    """Column expansion hit a vanishing Schur complement."""


class DegenerateRemovalError(NearSingularError):
    """Column removal hit a vanishing diagonal pivot."""


class RankOneSingularityError(NearSingularError):
    """Rank-one inverse update hit a vanishing denominator."""
