"""Exception hierarchy shared by all normpx modules."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class SingularityError(DomainError):
    """The operator is undefined because |Du + q|^2 + eps^2 vanishes."""


class SolverError(RuntimeError):
    """The nonlinear solver could not produce a solution."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConvergenceError(SolverError):
    """Iteration budget exhausted; ``report`` carries the best iterate."""


class ContinuationError(SolverError):
    """A solve inside an epsilon sweep failed."""

    def __init__(self, message, index, epsilon, report=None):
        super().__init__(message, report)
        self.index = index
        self.epsilon = epsilon
