"""
Exception hierarchy shared by all simulation modules.

The Monte-Carlo harness catches SensingError per trial; anything else is a bug.
"""


class SensingError(Exception):
    """Base class for all errors raised by the simulation pipeline."""


class ConfigError(SensingError, ValueError):
    """Invalid or unknown configuration."""


class WaveformError(SensingError, ValueError):
    """Invalid pulse parameters."""


class GeometryError(SensingError, ValueError):
    """Invalid scene, topology or position."""


class EstimationError(SensingError):
    """Local delay/coefficient estimation failed."""


class QuantizationError(SensingError):
    """Codec construction, allocation or bit-stream failure."""


class FusionError(SensingError):
    """Fusion-center reconstruction or localization failure."""
