"""Frame prediction from two references with per-pixel affine motion and local kernels."""

from .model import FramePredictor, ModelConfig, parameter_report
from .tensor import Tensor, backward

__all__ = ["FramePredictor", "ModelConfig", "parameter_report", "Tensor", "backward"]
__version__ = "0.1.0"
