"""Exception types raised by the merging engine."""


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class DegenerateWindowError(ValidationError):
    """A window with fewer than two tokens has no average similarity."""


class StaleCacheError(LookupError):
    """A cached selection was computed for a different window layout."""
