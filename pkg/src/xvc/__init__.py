"""Differentiable cross-view consistency losses for self-supervised depth.

Submodules: ``tensor`` (autodiff), ``camera``, ``photometric``,
``deformable``, ``voxel``, ``scene``, ``metrics``, ``experiments``, ``cli``.
"""
from .errors import ContractError, DomainError, GraphError
from .kernels import BACKEND
from .tensor import Tensor, backward

__version__ = "0.1.0"

__all__ = ["Tensor", "backward", "ContractError", "DomainError", "GraphError", "BACKEND"]
