"""Reverse-mode autodiff engine: tensors, tapes, ops, gradient checking."""

from .engine import GradientMap, Tape, Tensor, backward, no_grad
from .gradcheck import grad_check, grad_check_multi
from .sparse import SparseMatrix, load_triplets, save_triplets
from . import ops

__all__ = [
    "GradientMap",
    "Tape",
    "Tensor",
    "backward",
    "no_grad",
    "grad_check",
    "grad_check_multi",
    "SparseMatrix",
    "load_triplets",
    "save_triplets",
    "ops",
]
