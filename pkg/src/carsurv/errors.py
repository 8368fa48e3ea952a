"""Exception hierarchy shared by every carsurv module."""


class CarsurvError(Exception):
    """Base class for all errors raised by carsurv."""


class LawError(CarsurvError, ValueError):
    """A finite law violates one of its structural invariants."""


class MassError(LawError):
    """Atom masses are negative or do not sum to one."""


class DuplicateAtom(LawError):
    """The same outcome tuple appears twice in a law."""


class ZeroProbabilityEvent(CarsurvError):
    """Conditioning on an event that has probability zero."""


class EmptyStratum(CarsurvError, KeyError):
    """A treatment/covariate stratum has no mass."""

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else "empty stratum"


class InvalidHazard(CarsurvError, ValueError):
    """A cumulative hazard increment lies outside [0, 1]."""


class ZeroSurvival(CarsurvError, ZeroDivisionError):
    """A survival-type curve vanishes where it is used as a divisor."""


class PositivityViolation(CarsurvError):
    """Fitted propensity or censoring survival is too small to invert."""


class SampleFormatError(CarsurvError, ValueError):
    """A sample CSV is malformed."""


class ConfigError(CarsurvError, ValueError):
    """A scenario configuration is invalid."""
