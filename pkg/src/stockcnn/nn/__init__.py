"""From-scratch 1D CNN: kernels in :mod:`.functional`, model assembly in :mod:`.model`."""

from .functional import cross_entropy_loss, softmax
from .model import LayerSpec, Model, ModelSpec, build_model, default_architecture

__all__ = [
    "LayerSpec", "Model", "ModelSpec", "build_model", "cross_entropy_loss",
    "default_architecture", "softmax",
]
