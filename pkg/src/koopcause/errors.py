"""Exception hierarchy shared by all koopcause modules."""


class KoopcauseError(Exception):
    """Base class for every error raised by this package."""


class ContractViolation(KoopcauseError, ValueError):
    """An argument violates a documented precondition (shape, range, name)."""


class IntegrationDiverged(KoopcauseError, ArithmeticError):
    """A non-finite state appeared during time integration."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"integration produced a non-finite state at step {step}")


class InsufficientDataError(KoopcauseError, ValueError):
    """Not enough samples to build triples, split, or evaluate."""


class DegenerateFitError(KoopcauseError, ArithmeticError):
    """The feature matrix carries no information (all zeros)."""
