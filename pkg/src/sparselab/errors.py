"""Exception types shared across the package.

Every error carries enough context to diagnose the failing input; errors
that have a well-defined fallback (e.g. the nearest valid scaled database
spec) expose it as an attribute so callers can recover.
"""


class SparselabError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(SparselabError):
    """Operand shapes are incompatible."""


class ZeroColumn(SparselabError):
    """A matrix column has (near-)zero norm and cannot be normalized."""

    def __init__(self, index, norm):
        self.index = index
        self.norm = norm
        super().__init__(f"column {index} has norm {norm:.3e} <= 1e-12")


class TooFewColumns(SparselabError):
    """Mutual coherence needs at least two columns."""


class NotUnderdetermined(SparselabError):
    """The Welch bound applies only when there are more columns than rows."""


class NotNormalized(SparselabError):
    """A vector required to have unit Euclidean norm does not."""


class CombinatorialBlowup(SparselabError):
    """A brute-force enumeration would exceed the desk-scale budget."""

    def __init__(self, n, k, count, budget):
        self.n = n
        self.k = k
        self.count = count
        self.budget = budget
        super().__init__(
            f"C({n},{k}) = {count} exceeds the enumeration budget {budget}"
        )


class NoSolution(SparselabError):
    """Exhaustive support search found no fit within tolerance."""


class PathStall(SparselabError):
    """The homotopy path made no progress or failed its optimality check."""


class Infeasible(SparselabError):
    """The equality-constrained problem has no solution: y is not in the
    column span of the dictionary."""

    def __init__(self, residual, threshold):
        self.residual = residual
        self.threshold = threshold
        super().__init__(
            f"target is outside the dictionary span "
            f"(relative residual {residual:.3e} > {threshold:.3e})"
        )


class EmptySupport(SparselabError):
    """Thresholding removed every coefficient."""


class NonIntegerScaling(SparselabError):
    """Rescaled database dimensions are not integral; ``nearest`` holds the
    closest valid spec."""

    def __init__(self, message, nearest):
        self.nearest = nearest
        super().__init__(message)


class ZeroGroundTruth(SparselabError):
    """Recovery errors are undefined for an all-zero ground truth vector."""
