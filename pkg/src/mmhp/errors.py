"""Exception types shared across the package."""


class MMHPError(Exception):
    """Base class for errors raised by this package."""


class NumericalError(MMHPError):
    """A computation degenerated numerically (underflow, singular system, ...)."""


class StateStarvationError(MMHPError):
    """A hidden state received (almost) zero expected occupancy during fitting."""


class DecodeError(MMHPError):
    """State decoding failed (all path scores collapsed to -inf)."""


class DataError(MMHPError):
    """Malformed or inconsistent input data."""
