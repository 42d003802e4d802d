"""Exception classes. Each class maps to one CLI exit code."""


class SetGameError(Exception):
    exit_code = 1


class SpecError(SetGameError):
    """Malformed game file, DSL error, or bad coefficient evaluation."""

    exit_code = 2


class NoValueError(SetGameError):
    """An empty Hamiltonian / empty set value verdict."""

    exit_code = 3


class EmptyCloudError(NoValueError):
    def __init__(self, message, theta=None):
        super().__init__(message)
        self.theta = theta


class NotSingletonError(NoValueError):
    def __init__(self, message, theta=None):
        super().__init__(message)
        self.theta = theta


class NumericGuardError(SetGameError):
    """CFL, tree depth, or tilt-probability guard violated."""

    exit_code = 4


class ExportError(SetGameError):
    exit_code = 5
