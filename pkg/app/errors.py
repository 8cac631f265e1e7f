"""
Exception hierarchy for GaborNet Lab.

Every error raised by the services is a GaborNetError. It subclasses
ValueError so callers that only catch ValueError keep working.
"""
from typing import Optional


class GaborNetError(ValueError):
    """Base class for all domain errors."""


class ShapeError(GaborNetError):
    """Tensor extents do not match what an operation expects."""


class PolicyError(GaborNetError):
    """Trainability policy, mask or shared-slot bookkeeping is inconsistent."""


class SynthesisError(GaborNetError):
    """Gabor parameters are invalid or produce a degenerate kernel."""


class ConfigurationError(GaborNetError):
    """Invalid argument, preset, cost table or run configuration."""


class ComparisonError(GaborNetError):
    """Two reports or ledgers cannot be compared (iso-epoch violation)."""


class DegenerateInputError(GaborNetError):
    """A ratio would divide by zero energy."""


class IngestionError(GaborNetError):
    """Malformed IDX input. ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class DivergenceError(GaborNetError):
    """Training loss became non-finite."""

    def __init__(self, epoch: int, loss: float):
        super().__init__(f"Training diverged at epoch {epoch}: loss={loss}")
        self.epoch = epoch
        self.loss = loss


class ArchitectureParseError(GaborNetError):
    """Architecture text does not parse or does not tile."""

    def __init__(self, message: str, position: int, token: Optional[str] = None):
        where = f"token {position}" + (f" '{token}'" if token is not None else "")
        super().__init__(f"{message} at {where}")
        self.position = position
        self.token = token


class GradientCheckError(GaborNetError):
    """Non-finite value met while checking gradients."""

    def __init__(self, parameter: str, message: str = "non-finite value"):
        super().__init__(f"{message} while checking {parameter}")
        self.parameter = parameter
