"""Error taxonomy shared across the package.

The CLI maps these onto process exit codes, so library code should raise
the most specific class that applies rather than bare ValueError.
"""


class AdamfError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(AdamfError):
    """Bad or unknown configuration key/value."""


class ContractError(AdamfError):
    """A call violated an operation contract (shapes, modes, vocab bounds)."""


class DataError(AdamfError):
    """Malformed or inconsistent input data files (triples, features, checkpoints)."""


class NumericError(AdamfError):
    """Non-finite value encountered during training or checking."""


class GradCheckError(AdamfError):
    """Finite-difference gradient check exceeded tolerance."""
