"""Exception types shared across the package."""


class TreegenError(Exception):
    """Base class for library errors."""


class ValidationError(TreegenError):
    """Bad input data, schema mismatch, or invalid configuration."""


class PersistenceError(TreegenError):
    """Corrupt or unreadable model file."""


class PersistenceVersionError(PersistenceError):
    """Model file written by an incompatible format version."""
