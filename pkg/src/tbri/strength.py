"""Strength functions, F-functions, effective spacing and line-shape fits.

Histograms store probability mass per bin.  The two outermost bins also
collect everything beyond the binning range, and the fitted models are
integrated the same way (CDF differences with open outer edges), so a
model and a histogram are always compared mass-for-mass.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import optimize, special

from .hamiltonian import SparseHamiltonian
from .spectral import SpectralDecomposition

log = logging.getLogger(__name__)

DEFAULT_BINS = 51
DEFAULT_SPAN = 4.0  # half-range of the histogram in units of the exact width
DELTA_THRESHOLD = 0.5


class Shape(str, enum.Enum):
    DELTA = "delta-like"
    BREIT_WIGNER = "breit-wigner"
    GAUSSIAN = "gaussian"
    UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class LineFit:
    center: float
    width: float  # FWHM for Breit-Wigner, standard deviation for Gaussian
    sse: float
    converged: bool = True


@dataclass(frozen=True, eq=False)
class StrengthProfile:
    subject: int
    centroid: float
    exact_width: float
    bin_edges: np.ndarray
    weights: np.ndarray
    fit_bw: LineFit | None = None
    fit_gauss: LineFit | None = None
    preferred_shape: Shape = Shape.UNDETERMINED
    kind: str = "strength"

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    def model_masses(self) -> tuple[np.ndarray | None, np.ndarray | None]:
        bw = gauss = None
        if self.fit_bw is not None:
            bw = lorentzian_masses(self.bin_edges, self.fit_bw.center, self.fit_bw.width)
        if self.fit_gauss is not None:
            gauss = gaussian_masses(self.bin_edges, self.fit_gauss.center, self.fit_gauss.width)
        return bw, gauss


@dataclass(frozen=True, eq=False)
class EffectiveSpacing:
    unperturbed_energy: np.ndarray
    d_f: np.ndarray  # nan where the row is isolated
    m_eff: np.ndarray
    energy_range: np.ndarray
    mean: float
    std: float
    n_excluded: int
    window: tuple[float, float] = (0.25, 0.75)

    def summary_mask(self) -> np.ndarray:
        ok = self.m_eff > 0
        if not ok.any():
            return ok
        lo, hi = np.quantile(self.unperturbed_energy, self.window)
        return ok & (self.unperturbed_energy >= lo) & (self.unperturbed_energy <= hi)


def effective_spacing(h: SparseHamiltonian, window: tuple[float, float] = (0.25, 0.75)) -> EffectiveSpacing:
    """Local spacing of directly coupled unperturbed states, per row.

    The energy range spans the row's own state and every structurally
    coupled state.  Summary statistics use rows whose unperturbed energy
    lies between the given quantiles of all unperturbed energies.
    """
    e0 = np.asarray(h.h0_diagonal, dtype=np.float64)
    n = h.dimension
    r = np.concatenate([h.rows, h.cols])
    c = np.concatenate([h.cols, h.rows])
    e_hi = e0.copy()
    e_lo = e0.copy()
    np.maximum.at(e_hi, r, e0[c])
    np.minimum.at(e_lo, r, e0[c])
    m_eff = np.bincount(r, minlength=n)
    span = e_hi - e_lo
    with np.errstate(invalid="ignore", divide="ignore"):
        d_f = np.where(m_eff > 0, span / np.maximum(m_eff, 1), np.nan)
    n_excluded = int((m_eff == 0).sum())
    if n_excluded:
        log.warning("%d isolated rows have no effective spacing", n_excluded)
    result = EffectiveSpacing(e0, d_f, m_eff, span, math.nan, math.nan, n_excluded, window)
    mask = result.summary_mask()
    if mask.any():
        result = replace(result, mean=float(d_f[mask].mean()), std=float(d_f[mask].std()))
    return result


def fermi_golden_rule_width(v: float, d_f: float) -> float:
    if d_f <= 0:
        raise ValueError(f"effective spacing must be positive, got {d_f}")
    return 2.0 * math.pi * v * v / d_f


def crossover_estimate(spacing: EffectiveSpacing | tuple[float, float], n_particles: int) -> tuple[float, float, float]:
    """``(V_c, low, high)`` with ``V_c = <d_f> sqrt(N + 1)`` and a one-sigma band."""
    mean, std = (spacing.mean, spacing.std) if isinstance(spacing, EffectiveSpacing) else spacing
    if not np.isfinite(mean):
        raise ValueError("effective spacing summary is empty")
    root = math.sqrt(n_particles + 1)
    return mean * root, (mean - std) * root, (mean + std) * root


# -- histograms ---------------------------------------------------------------

def scaled_edges(n_bins: int = DEFAULT_BINS, span: float = DEFAULT_SPAN) -> np.ndarray:
    return np.linspace(-span, span, n_bins + 1)


def _bin_masses(x: np.ndarray, w: np.ndarray, edges: np.ndarray) -> np.ndarray:
    n_bins = edges.size - 1
    idx = np.searchsorted(edges, x, side="right") - 1
    idx = np.clip(idx, 0, n_bins - 1)
    return np.bincount(idx, weights=w, minlength=n_bins)


def _profile(subject, energies, weights, n_bins, span, kind) -> StrengthProfile:
    w = np.asarray(weights, dtype=np.float64)
    e = np.asarray(energies, dtype=np.float64)
    total = w.sum()
    centroid = float(w @ e / total)
    width = float(math.sqrt(max(w @ (e - centroid) ** 2 / total, 0.0)))
    if width > 0:
        edges = centroid + width * scaled_edges(n_bins, span)
    else:
        # no spread: any grid around the centroid resolves the delta
        edges = centroid + scaled_edges(n_bins, span)
    masses = _bin_masses(e, w / total, edges)
    return fit_shapes(StrengthProfile(subject, centroid, width, edges, masses, kind=kind))


def strength_function(spec: SpectralDecomposition, k: int, n_bins: int = DEFAULT_BINS,
                      span: float = DEFAULT_SPAN) -> StrengthProfile:
    """Weights |C_k^alpha|^2 of basis state k over the exact energies."""
    return _profile(k, spec.eigenvalues, spec.coefficients[k, :] ** 2, n_bins, span, "strength")


def f_function(spec: SpectralDecomposition, alpha: int, unperturbed_energies: np.ndarray,
               n_bins: int = DEFAULT_BINS, span: float = DEFAULT_SPAN) -> StrengthProfile:
    """Weights |C_k^alpha|^2 of eigenstate alpha over the unperturbed energies."""
    return _profile(alpha, unperturbed_energies, spec.coefficients[:, alpha] ** 2, n_bins, span, "f")


def scaled_strength_histograms(spec: SpectralDecomposition, states: Sequence[int], n_bins: int = DEFAULT_BINS,
                               span: float = DEFAULT_SPAN) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-state histograms on the common grid ``(E - centroid) / width``.

    Returns ``(masses[len(states), n_bins], centroids, widths)``.  Rows of
    states with zero width carry all their mass in the central bin.
    """
    states = np.asarray(states, dtype=np.int64)
    w = spec.coefficients[states, :] ** 2
    w = w / w.sum(axis=1, keepdims=True)
    e = spec.eigenvalues
    centroids = w @ e
    widths = np.sqrt(np.maximum(np.einsum("ka,ka->k", w, (e[None, :] - centroids[:, None]) ** 2), 0.0))
    edges = scaled_edges(n_bins, span)
    safe = np.where(widths > 0, widths, 1.0)
    x = (e[None, :] - centroids[:, None]) / safe[:, None]
    x[widths == 0] = 0.0
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, n_bins - 1)
    masses = np.zeros((states.size, n_bins))
    np.add.at(masses, (np.repeat(np.arange(states.size), e.size), idx.ravel()), w.ravel())
    return masses, centroids, widths


def averaged_profile(masses: np.ndarray, mean_width: float, n_bins: int = DEFAULT_BINS,
                     span: float = DEFAULT_SPAN, subject: int = -1) -> StrengthProfile:
    """Fit an ensemble-averaged scaled histogram, reported in energy units
    (offsets from the centroid, scaled by the mean exact width)."""
    m = np.asarray(masses, dtype=np.float64)
    avg = m.mean(axis=0) if m.ndim == 2 else m
    avg = avg / avg.sum()
    edges = mean_width * scaled_edges(n_bins, span)
    return fit_shapes(StrengthProfile(subject, 0.0, float(mean_width), edges, avg, kind="averaged"))


# -- line shapes ----------------------------------------------------------------

def _open_edges(edges: np.ndarray) -> np.ndarray:
    e = np.array(edges, dtype=np.float64)
    e[0], e[-1] = -np.inf, np.inf
    return e


def lorentzian_masses(edges: np.ndarray, center: float, fwhm: float) -> np.ndarray:
    cdf = np.arctan((_open_edges(edges) - center) / (0.5 * fwhm)) / np.pi
    return np.diff(cdf)


def gaussian_masses(edges: np.ndarray, center: float, sigma: float) -> np.ndarray:
    cdf = special.ndtr((_open_edges(edges) - center) / sigma)
    return np.diff(cdf)


def _fit(model, edges: np.ndarray, masses: np.ndarray) -> LineFit:
    scale = float(edges[-1] - edges[0])
    bin_width = float(np.min(np.diff(edges)))
    centers = 0.5 * (edges[1:] + edges[:-1])
    c0 = float(centers @ masses)

    def sse(params):
        c, logw = params
        r = model(edges, c, math.exp(logw)) - masses
        return float(r @ r)

    best = None
    for c in c0 + scale * np.linspace(-0.1, 0.1, 5):
        for logw in np.linspace(math.log(bin_width / 20), math.log(scale * 2), 40):
            val = sse((c, logw))
            if best is None or val < best[0]:
                best = (val, c, logw)
    opts = {"xatol": 1e-9 * scale, "fatol": 1e-14, "maxiter": 4000}
    res = optimize.minimize(sse, x0=[best[1], best[2]], method="Nelder-Mead", options=opts)
    if not res.success:
        # a restart from the stalled point usually collapses the simplex
        res = optimize.minimize(sse, x0=res.x, method="Nelder-Mead", options=opts)
    c, logw = res.x
    ok = bool(res.success) and np.isfinite(res.fun)
    return LineFit(float(c), float(math.exp(logw)), float(res.fun), ok)


def fit_shapes(profile: StrengthProfile, delta_threshold: float = DELTA_THRESHOLD) -> StrengthProfile:
    """Least-squares Breit-Wigner and Gaussian fits plus a shape verdict.

    Mass above ``delta_threshold`` in a single bin means the perturbative,
    delta-like regime; otherwise the fit with the smaller SSE wins.
    """
    bw = _fit(lorentzian_masses, profile.bin_edges, profile.weights)
    gauss = _fit(gaussian_masses, profile.bin_edges, profile.weights)
    if profile.weights.max() > delta_threshold:
        shape = Shape.DELTA
    elif not (bw.converged and gauss.converged):
        shape = Shape.UNDETERMINED
    elif bw.sse < gauss.sse:
        shape = Shape.BREIT_WIGNER
    else:
        shape = Shape.GAUSSIAN
    return replace(profile, fit_bw=bw, fit_gauss=gauss, preferred_shape=shape)
