"""Context-aware multimodal emotion recognition on a small numpy autodiff engine."""

from . import ops  # noqa: F401  binds operator sugar onto Tensor
from .tensor import GraphError, NonFiniteError, ShapeError, Tensor, no_grad

__version__ = "0.1.0"

__all__ = ["Tensor", "no_grad", "ShapeError", "NonFiniteError", "GraphError", "__version__"]
