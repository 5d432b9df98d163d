"""exceptions raised across the workbench"""


class RoqError(Exception):
    """base class for every error raised by this package"""


class ConfigurationError(RoqError):
    """a generator, model or experiment configuration is unusable"""


class ValidationError(RoqError):
    """an operation received input outside of its contract"""


class ShapeError(ValidationError):
    """tensor shapes do not conform

    the message always includes every offending shape
    """


class WorkloadIOError(RoqError):
    def __init__(self, path: str, reason: str) -> None:
        """reading or writing an artifact failed

        Args:
            path: file involved
            reason: description of the failure
        """
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


class TrainingDivergedError(RoqError):
    def __init__(self, epoch: int, loss: float) -> None:
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss
