"""
Error hierarchy for the palm haptics engine.
"""


class HapticError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(HapticError, ValueError):
    """A configuration file or value is missing or invalid."""


class NoIntersection(HapticError, ValueError):
    """The two distal links cannot meet: the mechanism does not close."""


class Unreachable(HapticError, ValueError):
    """No in-limit joint solution reaches the requested contact point."""


class NotInNonTouchPose(HapticError, RuntimeError):
    """Calibration was requested while a contact point presses the palm."""


class MalformedLine(HapticError, ValueError):
    """A protocol line could not be decoded."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class UnknownPatternError(HapticError, KeyError):
    """A pattern or stimulus id is outside the known label set."""


class TrialCountMismatch(HapticError, ValueError):
    """The number of responses does not match the number of trials."""
