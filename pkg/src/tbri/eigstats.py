"""Eigenvector localization measures and the component-randomness test."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.ndimage import uniform_filter1d

from .normality import InsufficientSamplesError, NormalityReport, normality_battery

NORM_TOL = 1e-8
DEFAULT_HALF_WINDOW = 10  # moving window of 2w + 1 = 21 components


class NotNormalizedError(ValueError):
    pass


def participation_ratio(vectors: np.ndarray) -> np.ndarray | float:
    """``1 / sum_k |C_k|^4`` for one vector or for each column of a matrix."""
    c = np.asarray(vectors, dtype=np.float64)
    single = c.ndim == 1
    if single:
        c = c[:, None]
    p = c**2
    norms = p.sum(axis=0)
    bad = np.abs(norms - 1.0) > NORM_TOL
    if bad.any():
        raise NotNormalizedError(f"{int(bad.sum())} vector(s) deviate from unit norm by more than {NORM_TOL}")
    pr = 1.0 / (p**2).sum(axis=0)
    return float(pr[0]) if single else pr


def shannon_components(vectors: np.ndarray) -> np.ndarray:
    """``exp(-sum_k p_k ln p_k)``, the entropy-based principal-component count."""
    p = np.asarray(vectors, dtype=np.float64) ** 2
    if p.ndim == 1:
        p = p[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(p > 0, p * np.log(p), 0.0).sum(axis=0)
    return np.exp(h)


def rescaled_energies(energies: np.ndarray) -> np.ndarray:
    e = np.asarray(energies, dtype=np.float64)
    sd = e.std()
    return (e - e.mean()) / (sd if sd > 0 else 1.0)


@dataclass(frozen=True, eq=False)
class PrReference:
    """Participation ratio of the interaction-only spectrum on a rescaled
    energy axis ``x = (E - mean) / std``, averaged over realizations."""

    bin_edges: np.ndarray
    mean_pr: np.ndarray  # nan for empty bins
    counts: np.ndarray
    description: str = ""

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    def __call__(self, x: np.ndarray) -> np.ndarray:
        ok = np.isfinite(self.mean_pr)
        return np.interp(x, self.bin_centers[ok], self.mean_pr[ok])


def pr_reference(runs: Sequence[tuple[np.ndarray, np.ndarray]], n_bins: int = 40,
                 span: float = 3.5, description: str = "") -> PrReference:
    """Bin ``(eigenvalues, participation_ratios)`` pairs of interaction-only
    runs in rescaled energy and average within bins."""
    edges = np.linspace(-span, span, n_bins + 1)
    sums = np.zeros(n_bins)
    counts = np.zeros(n_bins)
    for energies, pr in runs:
        x = rescaled_energies(energies)
        idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, n_bins - 1)
        sums += np.bincount(idx, weights=pr, minlength=n_bins)
        counts += np.bincount(idx, minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return PrReference(edges, mean, counts, description)


@dataclass(frozen=True)
class PrRecord:
    v: float
    energy: float
    pr: float
    pr_fraction: float  # PR / N_H
    pr_relative: float  # PR / PR_inf


def pr_records(v: float, eigenvalues: np.ndarray, pr: np.ndarray, reference: PrReference | None) -> list[PrRecord]:
    dim = eigenvalues.size
    rel = reference(rescaled_energies(eigenvalues)) if reference is not None else np.full(dim, np.nan)
    return [PrRecord(float(v), float(e), float(p), float(p / dim), float(p / r))
            for e, p, r in zip(eigenvalues, pr, rel)]


def envelope_rescaled(vectors: np.ndarray, basis_order: np.ndarray | None = None,
                      half_window: int = DEFAULT_HALF_WINDOW) -> np.ndarray:
    """Components divided by the square root of their local mean intensity.

    Rows are put in ``basis_order`` (normally ascending unperturbed energy),
    ``|C|^2`` is averaged over a moving window of ``2 w + 1`` components and
    over all supplied columns (eigenstates of close energy), and each
    component is divided by the root of that envelope.  Eigenvector signs
    are arbitrary, so each amplitude is returned with both signs.
    """
    c = np.asarray(vectors, dtype=np.float64)
    if c.ndim == 1:
        c = c[:, None]
    if basis_order is not None:
        c = c[np.asarray(basis_order)]
    env = uniform_filter1d((c**2).mean(axis=1), size=2 * half_window + 1, mode="nearest")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = c / np.sqrt(env)[:, None]
    out = out[env > 0].ravel()
    return np.concatenate([out, -out])


@dataclass(frozen=True, eq=False)
class GaussianityReport:
    samples: np.ndarray
    normality: NormalityReport

    @property
    def passed(self) -> bool:
        return self.normality.passed


def component_gaussianity(groups: Sequence[tuple[np.ndarray, np.ndarray | None]],
                          half_window: int = DEFAULT_HALF_WINDOW, **battery) -> GaussianityReport:
    """Pool envelope-rescaled components of several eigenvector groups and
    run the normality battery.

    Each group is ``(vectors, basis_order)`` from one Hamiltonian; the
    columns of a group should be eigenstates from one energy window.
    """
    parts = [envelope_rescaled(v, order, half_window) for v, order in groups]
    samples = np.concatenate(parts) if parts else np.zeros(0)
    if samples.size < battery.get("min_samples", 1000):
        raise InsufficientSamplesError(f"only {samples.size} component samples")
    return GaussianityReport(samples, normality_battery(samples, **battery))
