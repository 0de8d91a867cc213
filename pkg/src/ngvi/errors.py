"""Exception hierarchy shared by every module of the package."""


class NgviError(Exception):
    """Base class for all package errors."""


class DimensionError(NgviError, ValueError):
    pass


class FactorizationError(NgviError, ValueError):
    """A matrix expected to be positive definite failed to factorize."""


class ConfigError(NgviError, ValueError):
    pass


class StepSizeError(NgviError):
    """An update pushed a Cholesky diagonal entry to zero or below."""

    def __init__(self, message, index=None, iteration=None):
        super().__init__(message)
        self.index = index
        self.iteration = iteration


class PositivityError(NgviError):
    """A precision or covariance update lost positive definiteness."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class TheoryViolationError(NgviError):
    """Supplied constants are inconsistent with the convergence theory."""


class IntegrationError(NgviError):
    def __init__(self, message, last_valid_time=None):
        super().__init__(message)
        self.last_valid_time = last_valid_time


class ParseError(NgviError, ValueError):
    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f"line {line}"
            if column is not None:
                loc += f", column {column}"
            loc = f" ({loc})"
        super().__init__(message + loc)
        self.line = line
        self.column = column


class FetchError(NgviError, OSError):
    pass


class IntegrityError(FetchError):
    pass


class SplitError(NgviError, ValueError):
    pass
