from . import ops
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import check_gradients, random_input
from .params import ParameterStore
from .tensor import (
    NumericError,
    ShapeError,
    Tensor,
    finite_checks,
    grad_enabled,
    no_grad,
)

__all__ = [
    "ops",
    "Tensor",
    "NumericError",
    "ShapeError",
    "no_grad",
    "grad_enabled",
    "finite_checks",
    "ParameterStore",
    "check_gradients",
    "random_input",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointError",
]
