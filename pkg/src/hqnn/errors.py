class ConfigurationError(ValueError):
    """Invalid experiment, model or cluster configuration."""


class DatasetError(ValueError):
    """Dataset missing, empty, unreadable or inconsistent."""


class CheckpointFormatError(ValueError):
    """Checkpoint bytes are not a valid model file."""


class CheckpointVersionError(CheckpointFormatError):
    pass


class CompatibilityError(ValueError):
    """A checkpoint and a dataset do not fit together."""
