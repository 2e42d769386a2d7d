"""Error types shared across the package."""


class ZohFunnelError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(ZohFunnelError):
    """Malformed or inconsistent experiment configuration.

    The message always names the offending key and the violated constraint.
    """


class InfeasibleDesign(ZohFunnelError):
    """The design constants admit no positive sampling period.

    Carries the three tau candidate terms so callers can report which
    bound failed.
    """

    def __init__(self, message, terms=None):
        super().__init__(message)
        self.terms = terms


class FunnelViolation(ZohFunnelError):
    """The weighted tracking error left its admissible region (phi*||e|| >= 1)."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class NumericalBlowup(ZohFunnelError):
    """Integration produced a non-finite state component."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time
