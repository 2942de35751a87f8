"""Exception hierarchy shared by all solver modules."""


class WbarycError(Exception):
    """Base class for library errors."""


class DimensionMismatch(WbarycError, ValueError):
    pass


class InfeasibleNumerics(WbarycError, ArithmeticError):
    """The exact LP solver could not certify optimality."""


class NonConvergence(WbarycError, RuntimeError):
    def __init__(self, what, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"{what} did not converge after {iterations} iterations (residual {residual:.3e})")


class NumericUnderflow(WbarycError, ArithmeticError):
    """Gibbs kernel underflowed; retry in the log domain."""


class UndefinedDivergence(WbarycError, ValueError):
    pass


class DegenerateMass(WbarycError, ValueError):
    pass


class StreamExhausted(WbarycError, RuntimeError):
    pass


class MissingReference(WbarycError, ValueError):
    pass
