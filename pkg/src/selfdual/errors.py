"""Exception types shared across the package."""


class SelfdualError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(SelfdualError):
    pass


class DimensionTooHigh(SelfdualError):
    """Grid representations are limited to dimension 4."""


class GridTooCoarse(SelfdualError):
    """Requested dual box would be empty, or the grid cannot resolve it."""


class OutOfBox(SelfdualError):
    """Probe point falls outside a grid's box."""


class EmptyProbe(SelfdualError):
    """No probe node with both compared values finite."""


class ExtendedRealError(SelfdualError):
    """Disallowed extended-real arithmetic such as 0 * inf."""


class NotMonotone(SelfdualError):
    """A sampled graph violates pairwise monotonicity.

    Attributes
    ----------
    pairs : list of (i, j) index pairs witnessing the violation.
    """

    def __init__(self, pairs, worst=None):
        self.pairs = list(pairs)
        self.worst = worst
        msg = f"graph is not monotone at {len(self.pairs)} pair(s)"
        if worst is not None:
            msg += f", worst inner product {worst:.3e}"
        super().__init__(msg)


class NotCoercive(SelfdualError):
    """Objective does not grow along probe rays / attains minimum on the box boundary."""


class NoConvergence(SelfdualError):
    """An iterative solver hit its cap before reaching tolerance.

    Attributes
    ----------
    iterations : iterations performed.
    residual : last residual or optimality measure.
    """

    def __init__(self, iterations, residual, what=""):
        self.iterations = iterations
        self.residual = residual
        msg = f"no convergence after {iterations} iterations (residual {residual:.3e})"
        if what:
            msg = f"{what}: " + msg
        super().__init__(msg)


class Unbounded(SelfdualError):
    """Inner infimum is -inf (or a sup is +inf) on the probe region."""


class SandwichViolated(SelfdualError):
    """Sub-selfdual sandwich L* >= L >= <.,.> fails at a probe point."""

    def __init__(self, point, slack):
        self.point = point
        self.slack = slack
        super().__init__(f"sandwich violated at {point} (slack {slack:.3e})")


class SingularLambda(SelfdualError):
    """Twist transform requires a numerically nonsingular skew matrix."""


class FieldMismatch(SelfdualError):
    """Constructed potential disagrees with the operator at a validation sample."""

    def __init__(self, sample, expected, got, distance):
        self.sample = sample
        self.expected = expected
        self.got = got
        self.distance = distance
        super().__init__(
            f"field mismatch at x={sample}: expected {expected}, "
            f"nearest representative {got} (distance {distance:.3e})"
        )


class ClassInfeasible(SelfdualError):
    """No member of the operator class nearly solves the equation."""


class InvalidConfig(SelfdualError):
    """Malformed experiment configuration."""
