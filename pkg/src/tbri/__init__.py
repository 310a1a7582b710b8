"""Exact diagonalization of bosons with two-body random interactions."""

from .basis import BasisSizeError, FockBasis, StateNotFoundError, basis_dimension, enumerate_basis
from .ensemble import RunStore, SweepPlan, aggregate, derive_seed, execute, run_sweep
from .hamiltonian import SparseHamiltonian, SpMode, TbriModel, assemble, draw_disorder, structural_couplings
from .spectral import DimensionTooLargeError, SpectralDecomposition, diagonalize, dos
from .strength import Shape, StrengthProfile, effective_spacing, f_function, fit_shapes, strength_function
from .thermal import bed_comparison, local_criterion, occupation_numbers, solve_bed

__all__ = [
    "BasisSizeError", "FockBasis", "StateNotFoundError", "basis_dimension", "enumerate_basis",
    "RunStore", "SweepPlan", "aggregate", "derive_seed", "execute", "run_sweep",
    "SparseHamiltonian", "SpMode", "TbriModel", "assemble", "draw_disorder", "structural_couplings",
    "DimensionTooLargeError", "SpectralDecomposition", "diagonalize", "dos",
    "Shape", "StrengthProfile", "effective_spacing", "f_function", "fit_shapes", "strength_function",
    "bed_comparison", "local_criterion", "occupation_numbers", "solve_bed",
]
