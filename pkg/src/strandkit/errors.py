"""Exception hierarchy shared across the toolkit."""


class StrandkitError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(StrandkitError):
    """Invalid configuration value or unknown configuration key."""


class DataError(StrandkitError):
    """Malformed or missing input data (files, bundles, clouds)."""


class OutOfFrustumError(StrandkitError):
    """Point behind the camera or otherwise outside the view frustum."""


class InvalidDepthError(StrandkitError):
    """Non-positive depth passed where a positive depth is required."""


class PipelineError(StrandkitError):
    """A pipeline stage produced an unusable result (e.g. empty output)."""
