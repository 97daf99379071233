"""Exception types shared across the package.

The CLI maps ConfigurationError to exit code 1 (validation) and everything
else to exit code 2 (runtime failure).
"""


class FedPrioError(Exception):
    """Base class for package-specific failures."""


class ConfigurationError(FedPrioError):
    """Invalid configuration, dimensions, or inapplicable criteria."""


class DataFormatError(FedPrioError):
    """Malformed dataset file (bad magic, truncation, count mismatch)."""


class FederationError(FedPrioError):
    """A communication round could not be completed (always names the round)."""
