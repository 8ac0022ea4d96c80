"""Exception types raised across the package."""


class DivergenceError(RuntimeError):
    """A replica state became non-finite during integration.

    Attributes
    ----------
    step : int
        Index of the integration step (counted from the start of the run)
        after which the state was first found non-finite.
    rung : int or None
        Ladder rung of the offending replica, when known.
    """

    def __init__(self, step, rung=None, message=None):
        self.step = int(step)
        self.rung = rung
        if message is None:
            where = "" if rung is None else f" on rung {rung}"
            message = f"non-finite state after step {self.step}{where}"
        super().__init__(message)


class SigmaTooLargeError(ValueError):
    """The requested noise level cannot be deconvolved from the logistic.

    Raised when no bandwidth produces a valid correction table, or when a
    noisy exchange statistic has larger variance than the table supports.
    """


class CorrectionValidityError(ValueError):
    """A correction table or series evaluation is numerically unusable."""


class ConfigError(ValueError):
    """Invalid run configuration; ``line`` points into the source text."""

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        prefix = ""
        if source is not None and line is not None:
            prefix = f"{source}:{line}: "
        elif line is not None:
            prefix = f"line {line}: "
        super().__init__(prefix + message)
