"""Exception types.  The CLI maps each one to a distinct exit code."""


class InputError(ValueError):
    """Invalid arguments, malformed files or violated preconditions."""

    exit_code = 2


class CapacityError(RuntimeError):
    """A requested computation exceeds the supported state-space size."""

    exit_code = 3


class TrainingDivergenceError(RuntimeError):
    """Training produced a non-finite loss."""

    exit_code = 4

    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch} (loss={loss!r})")
