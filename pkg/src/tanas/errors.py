"""Exception taxonomy shared across the toolkit.

The CLI maps these onto exit codes: ValidationError -> 2, TrainingError -> 3.
"""


class TanasError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(TanasError):
    """Bad inputs, shapes, configs, or store state."""


class DataFormatError(ValidationError):
    """A data file failed to parse. Carries the file and byte offset."""

    def __init__(self, message: str, path=None, offset: int | None = None):
        if path is not None:
            message = f"{path}: {message}"
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.path = path
        self.offset = offset


class StoreError(ValidationError):
    """Dictionary store misuse: duplicate ids, unknown ids, lock conflicts."""


class TrainingError(TanasError):
    """Training diverged or failed to reach its target.

    ``best_accuracy`` is set when a representativeness gate was missed.
    """

    def __init__(self, message: str, best_accuracy: float | None = None):
        super().__init__(message)
        self.best_accuracy = best_accuracy
