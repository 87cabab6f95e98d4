"""
Error Types
Exception hierarchy shared by the tensor core, model, data and training packages
"""

from typing import Optional


class DepthEstimationError(Exception):
    """Base error; `code` is the identifier used in CLI and API error responses"""

    code = "DEPTH_ESTIMATION_ERROR"

    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


class DimensionError(DepthEstimationError):
    """Tensor shapes are inconsistent for the requested operation"""

    code = "DIMENSION_ERROR"


class GeometryError(DepthEstimationError):
    """Spatial sizes cannot be produced by the requested layer or crop"""

    code = "GEOMETRY_ERROR"


class DomainError(DepthEstimationError):
    """A value lies outside the mathematical domain of an operation"""

    code = "DOMAIN_ERROR"


class ContractError(DepthEstimationError):
    """A precondition on the call itself was violated"""

    code = "CONTRACT_ERROR"


class ConfigError(DepthEstimationError):
    """Configuration file or value is invalid"""

    code = "CONFIG_ERROR"


class ParseError(DepthEstimationError):
    """Malformed file contents; `offset` is the byte offset of the problem"""

    code = "PARSE_ERROR"

    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class CheckpointError(DepthEstimationError):
    code = "CHECKPOINT_ERROR"


class ChecksumError(CheckpointError):
    code = "CHECKPOINT_CHECKSUM"


class UnknownTensorError(CheckpointError):
    code = "CHECKPOINT_UNKNOWN_TENSOR"


class MissingTensorError(CheckpointError):
    code = "CHECKPOINT_MISSING_TENSOR"


class TensorShapeError(CheckpointError):
    code = "CHECKPOINT_SHAPE_MISMATCH"


class TrainingDivergedError(DepthEstimationError):
    """Loss became non-finite during training"""

    code = "TRAINING_DIVERGED"

    def __init__(self, step: int, lr: float, loss: float):
        self.step = step
        self.lr = lr
        self.loss = loss
        super().__init__(f"Non-finite loss {loss} at step {step} (lr={lr:.3e})")
