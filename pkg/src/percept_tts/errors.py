"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: usage errors -> 1, data errors -> 2,
numeric failures -> 3.
"""


class PerceptTtsError(Exception):
    """Base class for all toolkit errors."""


class UsageError(PerceptTtsError):
    """Bad command line or inconsistent configuration."""


class DataError(PerceptTtsError):
    """Malformed or missing input data (manifests, ratings, audio, caches)."""


class NumericalError(PerceptTtsError):
    """Non-finite losses or otherwise broken numerics during training."""
