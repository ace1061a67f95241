"""Exception hierarchy shared across the simulator."""


class TomographyError(Exception):
    """Base class for all tomosim errors."""


class ConfigError(TomographyError):
    """Invalid configuration (bad value, unknown key, inconsistent fields)."""


class GenerationError(ConfigError):
    """Random topology generation exhausted its retry budget."""


class UnsupportedTopologyError(ConfigError):
    """Probe construction requested on a topology kind it does not support."""


class EdgeListError(ConfigError):
    """Malformed edge-list input; carries the offending 1-based line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class IdentifiabilityError(TomographyError):
    """Probe set cannot uniquely determine the link parameters (rank(Q) < L)."""


class InsufficientDataError(TomographyError):
    """An estimator was asked for a quantity its tallies cannot support yet."""
