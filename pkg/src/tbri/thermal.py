"""Occupation numbers, Bose-Einstein fits and the local thermalization test."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize

from .basis import FockBasis
from .eigstats import participation_ratio, shannon_components
from .normality import NormalityReport, normality_battery
from .spectral import SpectralDecomposition

log = logging.getLogger(__name__)

BETA_BRACKET = 50.0
MAX_BRACKET = 1e4
CONSTRAINT_TOL = 1e-12


class BedDomainError(ValueError):
    """Target energy outside the range a Bose-Einstein distribution can reach."""


class BedSolverError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class OccupationDistribution:
    alpha: int
    values: np.ndarray
    energy: float
    dressed_energy: float

    @property
    def shift(self) -> float:
        return self.dressed_energy - self.energy


def occupation_numbers(spec: SpectralDecomposition, basis: FockBasis, alpha: int,
                       sp_energies: Sequence[float]) -> OccupationDistribution:
    w = spec.coefficients[:, alpha] ** 2
    n = w @ basis.occupations()
    dressed = float(n @ np.asarray(sp_energies, dtype=np.float64))
    return OccupationDistribution(int(alpha), n, float(spec.eigenvalues[alpha]), dressed)


def all_occupations(spec: SpectralDecomposition, basis: FockBasis) -> np.ndarray:
    """``n[alpha, s]`` for every eigenstate at once."""
    return (spec.coefficients**2).T @ basis.occupations()


# -- Bose-Einstein distribution --------------------------------------------------

@dataclass(frozen=True, eq=False)
class BedSolution:
    beta: float
    z: float
    predicted: np.ndarray
    particle_residual: float
    energy_residual: float

    @property
    def mu(self) -> float:
        """Chemical potential ``ln(z) / beta``; nan at infinite temperature."""
        return math.log(self.z) / self.beta if self.beta != 0 else math.nan


def bose_einstein(sp_energies: np.ndarray, beta: float, z: float) -> np.ndarray:
    eps = np.asarray(sp_energies, dtype=np.float64)
    return 1.0 / np.expm1(beta * eps - math.log(z))


def _occupations(eps: np.ndarray, beta: float, t: float) -> np.ndarray:
    # t = ln z - min_s(beta eps_s) < 0 keeps every occupation positive
    x = beta * eps
    x = x - x.min() - t
    with np.errstate(over="ignore"):  # overflow means an empty orbital, 1/inf = 0
        return 1.0 / np.expm1(x)


def _solve_t(eps: np.ndarray, beta: float, n_particles: float) -> float:
    m = eps.size
    lo = -2.0 * math.log1p(m / n_particles)  # strictly below N particles
    hi = -0.5 * math.log1p(1.0 / n_particles)  # lowest orbital alone holds about 2N
    if lo == hi:
        return lo
    return optimize.brentq(lambda t: _occupations(eps, beta, t).sum() - n_particles, lo, hi,
                           xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=200)


def _energy(eps: np.ndarray, beta: float, n_particles: float) -> float:
    return float(eps @ _occupations(eps, beta, _solve_t(eps, beta, n_particles)))


def _polish(eps, beta, t, n_particles, target, steps=4):
    """Newton steps on both constraints; keeps the bracketed root if they stall."""
    ref = eps[np.argmin(beta * eps)]

    def resid(b, tt):
        n = _occupations(eps, b, tt)
        return np.array([n.sum() - n_particles, eps @ n - target]), n

    r, _ = resid(beta, t)
    for _ in range(steps):
        n = _occupations(eps, beta, t)
        dn = -n * (n + 1.0)
        jac = np.array([[dn @ (eps - ref), -dn.sum()],
                        [(eps * dn) @ (eps - ref), -(eps * dn).sum()]])
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            break
        b_new, t_new = beta + step[0], t + step[1]
        if t_new >= 0 or not np.isfinite(b_new):
            break
        r_new, _ = resid(b_new, t_new)
        if np.abs(r_new).max() >= np.abs(r).max():
            break
        beta, t, r = b_new, t_new, r_new
    return beta, t


def solve_bed(sp_energies: Sequence[float], n_particles: float, target_energy: float) -> BedSolution:
    """Find (beta, z) whose Bose-Einstein occupations hold ``n_particles``
    bosons at total energy ``target_energy``.

    Nested bracketing: z from the particle constraint at fixed beta, then
    beta from the energy constraint, which decreases monotonically in beta.
    Targets above the infinite-temperature energy ``N * mean(eps)`` give
    negative beta.
    """
    eps = np.asarray(sp_energies, dtype=np.float64)
    n_particles = float(n_particles)
    if n_particles <= 0:
        raise BedDomainError("need a positive particle number")
    e_min, e_max = n_particles * eps.min(), n_particles * eps.max()
    if not e_min < target_energy < e_max:
        raise BedDomainError(
            f"target energy {target_energy} outside the open range ({e_min}, {e_max})")

    e_inf = n_particles * eps.mean()
    if target_energy == e_inf:
        beta = 0.0
    else:
        # E(beta) is decreasing, so the root lies on the side of 0 set by the target
        sign = 1.0 if target_energy < e_inf else -1.0
        bound = BETA_BRACKET
        f = lambda b: _energy(eps, b, n_particles) - target_energy
        while f(sign * bound) * sign > 0:
            if bound >= MAX_BRACKET:
                raise BedSolverError(
                    f"energy {target_energy} not bracketed for |beta| <= {MAX_BRACKET}; "
                    f"E(beta) at the bound is {f(sign * bound) + target_energy}")
            bound *= 2
        a, b = sorted((0.0, sign * bound))
        beta = optimize.brentq(f, a, b, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=400)

    t = _solve_t(eps, beta, n_particles)
    beta, t = _polish(eps, beta, t, n_particles, target_energy)
    n = _occupations(eps, beta, t)
    z = math.exp(t + float((beta * eps).min()))
    return BedSolution(float(beta), z, n, float(n.sum() - n_particles), float(eps @ n - target_energy))


def squared_deviation(measured: np.ndarray, predicted: np.ndarray, weights: np.ndarray | None = None) -> float:
    d = np.asarray(measured) - np.asarray(predicted)
    if weights is not None:
        d = d / np.asarray(weights)
    return float(d @ d)


@dataclass(frozen=True, eq=False)
class BedComparison:
    bare: BedSolution | None
    dressed: BedSolution | None
    chi2_bare: float
    chi2_dressed: float
    errors: tuple[str, ...] = ()


def bed_comparison(dist: OccupationDistribution, sp_energies: Sequence[float],
                   weights: np.ndarray | None = None) -> BedComparison:
    """Bose-Einstein fits at the eigenvalue and at the dressed energy.

    A failing branch is reported in ``errors`` with a nan score while the
    other branch is still returned.
    """
    n_particles = float(dist.values.sum())
    out, scores, errors = [], [], []
    for label, energy in (("bare", dist.energy), ("dressed", dist.dressed_energy)):
        try:
            sol = solve_bed(sp_energies, n_particles, energy)
        except (BedDomainError, BedSolverError) as exc:
            errors.append(f"{label}: {exc}")
            out.append(None)
            scores.append(math.nan)
            continue
        out.append(sol)
        scores.append(squared_deviation(dist.values, sol.predicted, weights))
    return BedComparison(out[0], out[1], scores[0], scores[1], tuple(errors))


# -- fluctuations ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FluctuationReport:
    mean: np.ndarray
    std: np.ndarray
    zeta: np.ndarray  # pooled over the orbitals kept
    excluded_orbitals: tuple[int, ...]
    normality: NormalityReport | None

    @property
    def passed(self) -> bool:
        return bool(self.normality is not None and self.normality.passed)


def occupation_fluctuations(samples: np.ndarray, **battery) -> FluctuationReport:
    """Pooled ``zeta_s = (n_s - <n_s>) / delta n_s`` over an ensemble.

    ``samples`` is ``(n_samples, M)``: one occupation vector per
    (realization, eigenstate-in-window).  Orbitals with zero variance are
    excluded with a warning.
    """
    n = np.asarray(samples, dtype=np.float64)
    mean = n.mean(axis=0)
    std = n.std(axis=0)
    keep = std > 1e-14 * np.maximum(1.0, np.abs(mean))
    excluded = tuple(int(s) for s in np.nonzero(~keep)[0])
    if excluded:
        log.warning("orbitals %s have no occupation variance and are excluded", excluded)
    zeta = ((n[:, keep] - mean[keep]) / std[keep]).ravel()
    report = normality_battery(zeta, **battery) if zeta.size else None
    return FluctuationReport(mean, std, zeta, excluded, report)


# -- local criterion -------------------------------------------------------------

class Verdict(str, enum.Enum):
    THERMAL = "thermal"
    NON_THERMAL = "non-thermal"


@dataclass(frozen=True)
class ThermalVerdict:
    alpha: int
    energy: float
    delta0: float
    n_pc: float
    d_loc: float
    ratio: float
    fluctuation_pass: bool | None
    verdict: Verdict

    @property
    def log_ratio(self) -> float:
        return math.log(self.ratio) if self.ratio > 0 else -math.inf


def energy_width(spec: SpectralDecomposition, unperturbed_energies: np.ndarray, alpha=None) -> np.ndarray:
    """``delta0 = sqrt(<H0^2> - <H0>^2)`` of eigenstates in the unperturbed basis."""
    w = spec.coefficients**2 if alpha is None else spec.coefficients[:, [alpha]] ** 2
    e0 = np.asarray(unperturbed_energies, dtype=np.float64)
    mean = e0 @ w
    var = (e0**2) @ w - mean**2
    out = np.sqrt(np.maximum(var, 0.0))
    return out if alpha is None else out[0]


def principal_components(vectors: np.ndarray, measure: str = "pr") -> np.ndarray:
    if measure == "pr":
        return participation_ratio(vectors)
    if measure == "entropy":
        return shannon_components(vectors)
    raise ValueError(f"unknown principal-component measure {measure!r}")


def classify(alpha: int, energy: float, delta0: float, n_pc: float, v: float,
             fluctuation_pass: bool | None = None) -> ThermalVerdict:
    """Thermal iff ``V > d_loc = delta0 / N_pc`` and the fluctuation test
    (when one was run) passed.  ``delta0 = 0`` gives ``d_loc = 0`` and a
    non-thermal verdict by convention."""
    if delta0 <= 0 or v <= 0:
        return ThermalVerdict(alpha, energy, 0.0, n_pc, 0.0, 0.0, fluctuation_pass, Verdict.NON_THERMAL)
    d_loc = delta0 / n_pc
    ratio = v / d_loc
    thermal = ratio > 1 and fluctuation_pass is not False
    return ThermalVerdict(alpha, energy, delta0, n_pc, d_loc, ratio, fluctuation_pass,
                          Verdict.THERMAL if thermal else Verdict.NON_THERMAL)


def local_criterion(spec: SpectralDecomposition, unperturbed_energies: np.ndarray, alpha: int, v: float,
                    fluctuation_pass: bool | None = None, measure: str = "pr") -> ThermalVerdict:
    delta0 = float(energy_width(spec, unperturbed_energies, alpha))
    n_pc = float(principal_components(spec.coefficients[:, [alpha]], measure)[0])
    return classify(int(alpha), float(spec.eigenvalues[alpha]), delta0, n_pc, v, fluctuation_pass)
