"""Exception hierarchy shared across the toolkit."""


class CaptiveError(Exception):
    """Base class for all toolkit errors."""


class DomainError(CaptiveError):
    """A time or value argument lies outside its admissible domain."""


class ConfigurationError(CaptiveError):
    """A model object is internally inconsistent or mis-wired."""


class StateError(CaptiveError):
    """A process value is incompatible with the current boundaries."""


class NumericalError(CaptiveError):
    """Non-finite values appeared during simulation."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class StatisticalError(CaptiveError):
    """A Monte-Carlo estimate is based on too few samples to be meaningful."""


class UsageError(CaptiveError):
    """An API was called out of protocol (e.g. time regression)."""
