"""Structure-based diagnostics for forward-operator error in linear inverse problems."""
from .grid_core import (
    FluxField,
    GridFn,
    MeanSplit,
    discrete_gradient_matrix,
    divergence,
    mean_split,
    norm_l1,
    norm_l2,
)
from .emd_solver import EmdConfig, EmdResult, emd, emd_exact, structure, structure_exact

__all__ = [
    "FluxField",
    "GridFn",
    "MeanSplit",
    "discrete_gradient_matrix",
    "divergence",
    "mean_split",
    "norm_l1",
    "norm_l2",
    "EmdConfig",
    "EmdResult",
    "emd",
    "emd_exact",
    "structure",
    "structure_exact",
]
