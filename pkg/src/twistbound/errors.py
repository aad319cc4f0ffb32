"""Exception types shared across the package."""


class TwistboundError(Exception):
    """Base class for all package errors."""


class DomainError(TwistboundError):
    """A chart point lies outside the declared chart domain."""

    def __init__(self, coord_name, value, lo, hi):
        self.coord_name = coord_name
        self.value = value
        super().__init__(
            f"coordinate {coord_name!r} = {value!r} outside chart domain [{lo}, {hi}]"
        )


class NumericError(TwistboundError):
    """A numeric intermediate is non-finite or a factorization failed."""


class ConfigError(TwistboundError):
    """Invalid run configuration or expression."""


class ExpressionError(ConfigError):
    """An expression string does not parse within the built-in grammar."""


class TwistSingularError(NumericError):
    """The twist field is (numerically) singular at an evaluation point."""

    def __init__(self, cond, where=None, step_index=None):
        self.cond = cond
        self.step_index = step_index
        msg = f"twist is numerically singular (condition number {cond:.3e})"
        if where is not None:
            msg += f" at {where}"
        if step_index is not None:
            msg += f" at path step {step_index}"
        super().__init__(msg)


class ModeError(TwistboundError):
    """A bound or check was requested in a mode whose hypothesis gate fails."""


class DegenerateEstimateError(NumericError):
    """Every sampled path exited the chart domain; the estimate is vacuous."""


class PreconditionError(TwistboundError):
    """An operation precondition fails; carries a witness point when known."""

    def __init__(self, message, witness=None):
        self.witness = witness
        if witness is not None:
            message += f" (witness point: {witness})"
        super().__init__(message)
