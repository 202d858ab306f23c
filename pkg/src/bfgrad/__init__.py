"""Reverse-mode differentiation of complex-valued programs, with a
mask-based beamforming pipeline built on top of it."""
from .errors import BfgradError, ContractError, DomainError, StructuralError
from .graph import Gradients, Node, Tape, Var, backward, project_real, sgd_step
from . import scalar_ops, tensor_ops, fourier, linalg, gradcheck

__version__ = "0.1.0"

__all__ = [
    "BfgradError", "ContractError", "DomainError", "StructuralError",
    "Gradients", "Node", "Tape", "Var", "backward", "project_real", "sgd_step",
    "scalar_ops", "tensor_ops", "fourier", "linalg", "gradcheck", "__version__",
]
