"""Exception hierarchy shared by every v2xrelay module."""


class V2XError(Exception):
    """Base class for all errors raised by this package."""


class InvalidSignal(V2XError):
    pass


class InvalidRelay(V2XError):
    pass


class EmptySelection(V2XError):
    pass


class InfiniteSnr(V2XError):
    """Every noise term in an SNR denominator is zero, so the ratio is unbounded."""


class PreconditionViolated(V2XError):
    pass


class InvalidSnr(V2XError):
    pass


class EmptyPool(V2XError):
    pass


class InsufficientRelays(V2XError):
    pass


class InfeasibleBudget(V2XError):
    """The power budget cannot cover the minimum forwarding powers."""


class ConfigError(V2XError):
    """Configuration file failed to parse or validate."""
