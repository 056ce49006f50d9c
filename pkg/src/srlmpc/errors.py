"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad input: wrong shape, out of range, nonfinite."""


class HorizonError(ValidationError):
    """A prediction does not cover the requested horizon."""


class NoUsablePrediction(RuntimeError):
    """No delivered, non-stale leader packet is available."""


class InfeasibleError(RuntimeError):
    """An optimal control problem has no feasible solution.

    ``constraints`` names the constraint groups that were active in the
    failing problem, for reporting.
    """

    def __init__(self, message, constraints=()):
        super().__init__(message)
        self.constraints = tuple(constraints)
