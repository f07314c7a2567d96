"""Exception types shared across the package.

The CLI maps these onto process exit codes: UsageError -> 1,
NumericError -> 2, ResourceCapError -> 3.
"""


class PairflipError(Exception):
    """Base class for package errors."""


class UsageError(PairflipError):
    """Invalid arguments or parameter combinations."""


class NumericError(PairflipError):
    """A numerical routine failed to converge or produced an unusable result."""


class ResourceCapError(PairflipError):
    """A requested computation exceeds a configured size cap."""
