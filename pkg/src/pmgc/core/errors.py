class UserError(Exception):
    """Expected failure caused by input, configuration or data. The CLI prints it without a traceback."""


class ShapeError(UserError, ValueError):
    """Matrix shapes do not conform, or data does not match the configured model."""


class DataError(UserError, ValueError):
    """Malformed CSV, labels or synthetic spec."""


class NonFiniteError(UserError, ArithmeticError):
    """A loss, gradient or parameter became NaN or infinite."""


class TrainingDivergedError(NonFiniteError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, batch: int, loss: float) -> None:
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class CheckpointError(UserError):
    """Checkpoint file is missing, malformed or incompatible."""


class ConfigError(UserError, ValueError):
    """Invalid hyperparameter or option value."""
