"""Exception hierarchy shared by all modules."""


class UnidevError(Exception):
    """Base class for every error raised by this package."""


class InvalidMemberError(UnidevError, KeyError):
    pass


class EmptyClassError(UnidevError):
    pass


class CapacityTooLargeError(UnidevError):
    """An exhaustive enumeration would exceed its configured size guard."""


class ResolutionError(UnidevError):
    """The dyadic depth is too shallow to separate the given points."""


class HypothesisError(UnidevError):
    """A bound was requested outside the hypotheses under which it holds."""


class WindowError(UnidevError):
    pass


class IntegrationError(UnidevError):
    pass


class OptimizationError(UnidevError):
    def __init__(self, message, best_value=None, best_measure=None):
        super().__init__(message)
        self.best_value = best_value
        self.best_measure = best_measure


class NormalizerError(UnidevError):
    pass


class ProtocolError(UnidevError):
    """Median and tail phases share a seed, or a phase was skipped."""


class ConfigError(UnidevError):
    pass
