"""Exception hierarchy shared by every subpackage."""


class FreewayDQNError(Exception):
    """Base class so the CLI can catch everything we raise on purpose."""

    kind = "error"


class RejectedInputError(FreewayDQNError, ValueError):
    kind = "rejected_input"


class WrongArchitectureError(RejectedInputError):
    kind = "wrong_architecture"


class AlreadyCollidingError(RejectedInputError):
    kind = "already_colliding"


class SpawnCapacityError(FreewayDQNError):
    kind = "spawn_capacity"


class EpisodeFinishedError(FreewayDQNError):
    kind = "episode_finished"


class TrainingDivergedError(FreewayDQNError, ArithmeticError):
    kind = "training_diverged"


class DegenerateDistributionError(FreewayDQNError):
    kind = "degenerate_distribution"


class ConfigError(FreewayDQNError):
    kind = "config"


class ParamsFileError(FreewayDQNError):
    kind = "params_file"

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class VersionMismatchError(ParamsFileError):
    kind = "params_version"


class MalformedFileError(ParamsFileError):
    kind = "params_malformed"


class ArchitectureMismatchError(ParamsFileError):
    kind = "params_architecture"
