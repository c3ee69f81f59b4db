"""Exception hierarchy. CLI exit codes key off these classes."""


class SubflowError(Exception):
    exit_code = 1


class ConfigError(SubflowError, ValueError):
    exit_code = 2


class ValidationError(SubflowError, ValueError):
    exit_code = 2


class StateError(SubflowError, ValueError):
    """A point or vector is off the manifold it claims to live on."""

    exit_code = 3


class PotentialDomainError(SubflowError, ValueError):
    exit_code = 3


class UnsupportedTargetError(SubflowError, TypeError):
    exit_code = 2


class NumericalBlowupError(SubflowError, ArithmeticError):
    exit_code = 3

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class PreconditionError(SubflowError):
    exit_code = 4
