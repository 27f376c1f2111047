"""Exception types shared across the package."""


class UsageError(ValueError):
    """Raised when a caller passes arguments that violate an operation's contract."""


class CapExceeded(UsageError):
    """Raised when an enumeration or construction would exceed a configured size cap."""

    def __init__(self, message, size=None, cap=None):
        super().__init__(message)
        self.size = size
        self.cap = cap
