"""Dense exact diagonalization and density-of-states helpers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import stats

from .hamiltonian import SparseHamiltonian

DEFAULT_MAX_DIMENSION = 20_000


class DimensionTooLargeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    eigenvalues: np.ndarray  # ascending
    coefficients: np.ndarray  # coefficients[k, alpha] = <k|alpha>
    basis_ref: str = ""

    @property
    def dimension(self) -> int:
        return self.eigenvalues.size

    def weights(self) -> np.ndarray:
        """|C_k^alpha|^2 with the same (k, alpha) layout."""
        return self.coefficients**2


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns in place so each one's largest-magnitude entry is positive."""
    if vectors.size == 0:
        return vectors
    lead = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[lead, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    vectors *= signs
    return vectors


def diagonalize_dense(h: np.ndarray, basis_ref: str = "", max_dimension: int = DEFAULT_MAX_DIMENSION) -> SpectralDecomposition:
    n = h.shape[0]
    if n > max_dimension:
        raise DimensionTooLargeError(
            f"dense decomposition of a {n}x{n} matrix exceeds the cap of {max_dimension}; "
            "reduce N or M, or raise max_dimension if memory allows (needs ~16 n^2 bytes)"
        )
    w, v = scipy.linalg.eigh(h, driver="evd")
    fix_signs(v)
    return SpectralDecomposition(w, v, basis_ref)


def diagonalize(h: SparseHamiltonian, basis_ref: str = "", max_dimension: int = DEFAULT_MAX_DIMENSION) -> SpectralDecomposition:
    if h.dimension > max_dimension:
        raise DimensionTooLargeError(
            f"dimension {h.dimension} exceeds the dense cap of {max_dimension}; reduce N or M")
    return diagonalize_dense(h.to_dense(), basis_ref or f"N={h.n_particles},M={h.n_levels}", max_dimension)


def residual_norms(h: SparseHamiltonian, spec: SpectralDecomposition) -> np.ndarray:
    """||H|alpha> - E^alpha |alpha>|| for every alpha."""
    hv = h.to_csr() @ spec.coefficients
    return np.linalg.norm(hv - spec.coefficients * spec.eigenvalues[None, :], axis=0)


@dataclass(frozen=True)
class DosHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    density: np.ndarray  # integrates to the number of eigenvalues
    mean: float
    variance: float
    skewness: float


def dos(eigenvalues: np.ndarray, n_bins: int = 50) -> DosHistogram:
    if n_bins < 2:
        raise ValueError("need at least two bins")
    e = np.asarray(eigenvalues, dtype=np.float64)
    lo, hi = float(e.min()), float(e.max())
    if hi == lo:
        # degenerate spectrum: everything in the middle bin of a unit-width grid
        lo, hi = lo - 0.5, lo + 0.5
        edges = np.linspace(lo, hi, n_bins + 1)
        counts = np.zeros(n_bins)
        counts[n_bins // 2] = e.size
    else:
        counts, edges = np.histogram(e, bins=n_bins, range=(lo, hi))
        counts = counts.astype(np.float64)
    density = counts / np.diff(edges)
    var = float(e.var())
    skew = float(stats.skew(e)) if var > 0 else 0.0
    return DosHistogram(edges, counts, density, float(e.mean()), var, skew)
