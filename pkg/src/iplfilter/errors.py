"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid generation, training, or run configuration."""


class ManifestError(ValueError):
    """Malformed manifest content or corpus integrity violation."""


class ShapeError(ValueError):
    """Feature/model dimension mismatch."""


class FeasibilityError(ValueError):
    """Label sequence cannot be aligned to the given number of frames."""


class TrainingError(RuntimeError):
    """Training aborted; the message names the offending utterance."""


class MetricError(ValueError):
    """Metric undefined for the given input."""


class OracleError(ValueError):
    """Ground truth missing for an utterance on an oracle-only path."""


class InsufficientProbeError(ValueError):
    """Probe set too small for threshold estimation."""
