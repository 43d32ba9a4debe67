"""Exception types shared across the package.

Plain contract violations (bad shapes, out-of-range indices, empty
sequences) raise ValueError; these classes cover recoverable,
user-facing failure modes.
"""


class McrfError(Exception):
    """Base class for package-specific errors."""


class ConfigurationError(McrfError):
    """Invalid configuration: bad scheme, duplicate types, unusable mask value."""


class DataError(McrfError):
    """Corpus-level problem: illegal gold path, misaligned files."""


class FormatError(McrfError):
    """Malformed file content: bad CoNLL row, bad logits header, corrupt model."""


class SizeError(McrfError):
    """Instance too large for an exact enumeration oracle."""


class TrainingError(McrfError):
    """Training aborted: non-finite loss or similar unrecoverable state."""
