"""Exception types shared across the package.

Exit-code mapping used by the CLI: ConfigurationError -> 2,
IngestionError -> 3, anything else -> 4.
"""


class SliceSimError(Exception):
    """Base class for all slicesim errors."""


class ConfigurationError(SliceSimError):
    """Invalid or infeasible configuration (bad scenario file, bad parameters)."""


class IngestionError(SliceSimError):
    """Malformed external input, e.g. a broken VR trace file."""
