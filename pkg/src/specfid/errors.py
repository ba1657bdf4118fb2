"""
Exception hierarchy for the toolkit.

The command line front end maps each class to a process exit code, so library
code raises the most specific class that applies.
"""


class SpecFidError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class UsageError(SpecFidError):
    """Missing or contradictory command line arguments."""

    exit_code = 1


class DataError(SpecFidError):
    """Malformed input data such as a bad CSV, manifest or image file."""

    exit_code = 2


class ImageError(DataError):
    """Unreadable, unsupported or zero-sized image."""


class NumericError(SpecFidError):
    """A computation produced NaN or infinite values."""

    exit_code = 3
