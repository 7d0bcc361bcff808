"""Exception taxonomy, mapped to process exit codes by the CLI."""


class SceneMotionError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ConfigError(SceneMotionError):
    """Invalid or inconsistent configuration (exit code 2)."""

    exit_code = 2


class DataError(SceneMotionError):
    """Corrupt, missing, or invariant-violating dataset content (exit code 3)."""

    exit_code = 3


class CheckpointError(SceneMotionError):
    """Missing or malformed model checkpoint (exit code 4)."""

    exit_code = 4


class EvaluationError(SceneMotionError):
    """Ill-posed evaluation request (mismatched shapes, bad indices)."""
