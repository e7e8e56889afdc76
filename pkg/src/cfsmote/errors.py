"""Exception hierarchy shared by every module."""


class CFSmoteError(Exception):
    """Base class for all errors raised by this package."""


class DataError(CFSmoteError, ValueError):
    """Malformed, inconsistent or insufficient input data."""


class MethodError(CFSmoteError):
    """An augmentation method cannot run on the data it was given."""


class DegenerateTestError(CFSmoteError, ValueError):
    """A statistical test is undefined for its input (e.g. all differences zero)."""
