"""Structured low-rank matrix modeling for navigator-free EPI ghost correction."""

__version__ = "0.1.0"

from .errors import NumericalError, ValidationError
from .kspace import (
    ComplexGrid,
    MeasuredData,
    SamplingPattern,
    apply_sampling,
    epi_pattern,
    epi_patterns,
    fft2_centered,
    ifft2_centered,
    nrmse,
    sign_flip_unmeasured,
    zero_fill,
)
from .lifting import NeighborhoodSpec, concat_polarities, lift_c, lift_s
from .regularizers import Regularizer, estimate_rank, rank_r_approx
from .sense import SenseMaps
from .solvers import (
    ReconConfig,
    estimate_nullspace,
    solve_ac_loraks,
    solve_sense_loraks,
    solve_unconstrained,
)

__all__ = [
    "ComplexGrid", "MeasuredData", "NeighborhoodSpec", "NumericalError", "ReconConfig",
    "Regularizer", "SamplingPattern", "SenseMaps", "ValidationError", "apply_sampling",
    "concat_polarities", "epi_pattern", "epi_patterns", "estimate_nullspace", "estimate_rank",
    "fft2_centered", "ifft2_centered", "lift_c", "lift_s", "nrmse", "rank_r_approx",
    "sign_flip_unmeasured", "solve_ac_loraks", "solve_sense_loraks", "solve_unconstrained",
    "zero_fill",
]
