"""Disorder realizations and sparse assembly of H = H0 + H_I.

The coefficient tensor V[s1, s2, s3, s4] is symmetric under s1<->s2,
s3<->s4 and (s1, s2)<->(s3, s4), and one Gaussian is drawn per symmetry
class.  A class is a pair ``(p, q)`` of unordered level pairs, so the
independent coefficients form a symmetric ``P x P`` matrix ``V_pq`` with
``P = M (M + 1) / 2``.

With pair annihilators ``B_p = a_c a_d`` for ``p = (c <= d)`` the two
supported operator sums are

``"classes"`` (default)
    every class enters once, as the Hermitian part of its operator:
    ``H_I = sum_{p <= q} V_pq (B_p^T B_q + B_q^T B_p) / 2``,
    i.e. ``W_pq = V_pq / 2`` off the pair diagonal and ``V_pp`` on it.

``"ordered"``
    ``a+ a+ a a`` summed over all ordered quadruples, which counts each
    class ``m_p m_q`` times (``m = 2`` for c != d): ``W_pq = m_p m_q V_pq``.

Either way ``H_I = B^T (W kron 1) B`` with the pair annihilators stacked
into one sparse matrix ``B``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .basis import FockBasis, basis_dimension, enumerate_basis


class SpMode(str, enum.Enum):
    UNIFORM_RANDOM = "uniform-random"
    PICKET_FENCE = "picket-fence"


OPERATOR_SUMS = ("classes", "ordered")
SP_STREAM = 0
TWO_BODY_STREAM = 1


def substream(seed: int, stream: int) -> np.random.Generator:
    """PCG64 generator for one named substream of a 64-bit seed."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.PCG64(ss))


def level_pairs(n_levels: int) -> np.ndarray:
    """Unordered level pairs ``(c, d)`` with ``c <= d``, in row-major order."""
    c, d = np.triu_indices(n_levels)
    return np.column_stack([c, d])


@dataclass(frozen=True, eq=False)
class TbriModel:
    n_particles: int
    n_levels: int
    interaction_strength: float
    sp_energies: np.ndarray
    sp_mode: SpMode
    pair_coefficients: np.ndarray = field(repr=False)  # symmetric (P, P), V_pq
    rng_seed: int
    sp_seed: int | None = None
    operator_sum: str = "classes"

    @property
    def pairs(self) -> np.ndarray:
        return level_pairs(self.n_levels)

    def coefficient(self, s1: int, s2: int, s3: int, s4: int) -> float:
        """Full-tensor entry V[s1, s2, s3, s4]."""
        p = _pair_index(self.n_levels, min(s1, s2), max(s1, s2))
        q = _pair_index(self.n_levels, min(s3, s4), max(s3, s4))
        return float(self.pair_coefficients[p, q])

    def coefficient_tensor(self) -> np.ndarray:
        """Dense ``M**4`` tensor; for small M only."""
        m = self.n_levels
        idx = np.empty((m, m), dtype=np.int64)
        for p, (c, d) in enumerate(self.pairs):
            idx[c, d] = idx[d, c] = p
        return self.pair_coefficients[idx[:, :, None, None], idx[None, None, :, :]]

    def independent_coefficients(self) -> np.ndarray:
        """One value per symmetry class (upper triangle of the pair matrix)."""
        return self.pair_coefficients[np.triu_indices(self.pair_coefficients.shape[0])]

    def without_h0(self) -> "TbriModel":
        """Same two-body part with all single-particle energies set to zero."""
        return TbriModel(
            self.n_particles, self.n_levels, self.interaction_strength,
            np.zeros_like(self.sp_energies), self.sp_mode, self.pair_coefficients,
            self.rng_seed, self.sp_seed, self.operator_sum,
        )


def _pair_index(m: int, c: int, d: int) -> int:
    return c * m - c * (c - 1) // 2 + (d - c)


def draw_sp_energies(n_levels: int, mode: SpMode | str, seed: int) -> np.ndarray:
    mode = SpMode(mode)
    if mode is SpMode.PICKET_FENCE:
        return np.arange(n_levels, dtype=np.float64)
    eps = substream(seed, SP_STREAM).uniform(0.0, n_levels, size=n_levels)
    return np.sort(eps)


def draw_disorder(
    n_particles: int,
    n_levels: int,
    interaction_strength: float,
    seed: int,
    sp_mode: SpMode | str = SpMode.UNIFORM_RANDOM,
    sp_seed: int | None = None,
    operator_sum: str = "classes",
) -> TbriModel:
    """Draw one realization.

    Single-particle energies come from the ``sp_seed`` substream (``seed``
    when omitted), sorted ascending.  The two-body table is unit Gaussians
    scaled by ``interaction_strength``, so the same seed gives the same
    disorder geometry at every V.
    """
    if interaction_strength < 0:
        raise ValueError(f"interaction strength must be >= 0, got {interaction_strength}")
    if n_levels < 2:
        raise ValueError(f"need at least two levels, got M={n_levels}")
    if n_particles < 1:
        raise ValueError(f"need at least one particle, got N={n_particles}")
    if operator_sum not in OPERATOR_SUMS:
        raise ValueError(f"operator_sum must be one of {OPERATOR_SUMS}, got {operator_sum!r}")
    sp_mode = SpMode(sp_mode)
    eps = draw_sp_energies(n_levels, sp_mode, seed if sp_seed is None else sp_seed)

    n_pairs = n_levels * (n_levels + 1) // 2
    iu = np.triu_indices(n_pairs)
    unit = substream(seed, TWO_BODY_STREAM).standard_normal(iu[0].size)
    table = np.zeros((n_pairs, n_pairs))
    table[iu] = unit * float(interaction_strength)
    table = table + np.triu(table, 1).T
    table.setflags(write=False)
    eps.setflags(write=False)
    return TbriModel(
        n_particles, n_levels, float(interaction_strength), eps, sp_mode, table, int(seed),
        None if sp_seed is None else int(sp_seed), operator_sum,
    )


@dataclass(frozen=True, eq=False)
class SparseHamiltonian:
    """Upper-triangle storage of a real symmetric many-body Hamiltonian.

    ``rows, cols`` list every *structurally* allowed coupling (row < col),
    sorted by (row, col), even where the drawn value happens to vanish.
    """

    dimension: int
    diagonal: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    h0_diagonal: np.ndarray
    n_particles: int = 0
    n_levels: int = 0

    def to_csr(self) -> sp.csr_matrix:
        n = self.dimension
        r = np.concatenate([self.rows, self.cols, np.arange(n)])
        c = np.concatenate([self.cols, self.rows, np.arange(n)])
        v = np.concatenate([self.values, self.values, self.diagonal])
        return sp.csr_matrix((v, (r, c)), shape=(n, n))

    def to_dense(self) -> np.ndarray:
        h = np.diag(self.diagonal.astype(np.float64))
        h[self.rows, self.cols] = self.values
        h[self.cols, self.rows] = self.values
        return h

    def offdiag_square_sums(self) -> np.ndarray:
        """Per-row sum of squared off-diagonal elements."""
        sq = self.values**2
        return (np.bincount(self.rows, sq, self.dimension)
                + np.bincount(self.cols, sq, self.dimension))

    def norm_estimate(self) -> float:
        """Upper bound on the spectral norm (max absolute row sum)."""
        a = np.abs(self.values)
        rowsum = np.abs(self.diagonal) + np.bincount(self.rows, a, self.dimension) + np.bincount(
            self.cols, a, self.dimension)
        return float(rowsum.max()) if self.dimension else 0.0


@lru_cache(maxsize=8)
def _pair_annihilators(n_particles: int, n_levels: int) -> tuple[sp.csr_matrix, int] | None:
    """Stacked ``B`` with rows ``p * D2 + r`` (pair p, (N-2)-particle state r)."""
    if n_particles < 2:
        return None
    basis = enumerate_basis(n_particles, n_levels)
    lower = enumerate_basis(n_particles - 2, n_levels) if n_particles > 2 else None
    d2 = 1 if lower is None else lower.dimension
    occ = basis.states.astype(np.int64)
    rows, cols, vals = [], [], []
    for p, (c, d) in enumerate(level_pairs(n_levels)):
        if c == d:
            amp = np.sqrt(occ[:, c] * (occ[:, c] - 1.0))
        else:
            amp = np.sqrt(occ[:, c] * occ[:, d] * 1.0)
        k = np.nonzero(amp > 0)[0]
        if k.size == 0:
            continue
        target = occ[k].copy()
        target[:, c] -= 1
        target[:, d] -= 1
        r = np.zeros(k.size, dtype=np.int64) if lower is None else lower.rank(target)
        rows.append(p * d2 + r)
        cols.append(k)
        vals.append(amp[k])
    n_pairs = n_levels * (n_levels + 1) // 2
    b = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_pairs * d2, basis.dimension),
    )
    return b, d2


@lru_cache(maxsize=8)
def structural_couplings(n_particles: int, n_levels: int) -> tuple[np.ndarray, np.ndarray]:
    """All (row < col) pairs connected by some a+a+aa term, sorted.

    Depends only on (N, M): a pair is coupled when both states reach a
    common (N-2)-particle state by removing two bosons.
    """
    ops = _pair_annihilators(n_particles, n_levels)
    if ops is None:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    b, d2 = ops
    # summing all pair blocks keeps every path since the amplitudes are positive
    coo = b.tocoo()
    reach = sp.csr_matrix((coo.data, (coo.row % d2, coo.col)), shape=(d2, b.shape[1]))
    pattern = sp.triu(reach.T @ reach, k=1).tocoo()
    order = np.lexsort((pattern.col, pattern.row))
    rows = pattern.row[order].astype(np.int64)
    cols = pattern.col[order].astype(np.int64)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


def pair_weights(model: TbriModel) -> np.ndarray:
    """``W`` such that ``H_I = sum_pq W_pq B_p^T B_q``."""
    v = model.pair_coefficients
    if model.operator_sum == "ordered":
        pairs = level_pairs(model.n_levels)
        mult = np.where(pairs[:, 0] == pairs[:, 1], 1.0, 2.0)
        return mult[:, None] * v * mult[None, :]
    w = 0.5 * v
    w[np.diag_indices_from(w)] = np.diag(v)
    return w


def interaction_matrix(model: TbriModel) -> sp.csr_matrix:
    """H_I as a full symmetric CSR matrix."""
    dim = basis_dimension(model.n_particles, model.n_levels)
    ops = _pair_annihilators(model.n_particles, model.n_levels)
    if ops is None:
        return sp.csr_matrix((dim, dim))
    b, d2 = ops
    w = pair_weights(model)
    hi = b.T @ (sp.kron(sp.csr_matrix(w), sp.identity(d2, format="csr"), format="csr") @ b)
    return sp.csr_matrix(hi)


def assemble(model: TbriModel, basis: FockBasis) -> SparseHamiltonian:
    if (basis.n_particles, basis.n_levels) != (model.n_particles, model.n_levels):
        raise ValueError(
            f"basis is N={basis.n_particles}, M={basis.n_levels} but model is "
            f"N={model.n_particles}, M={model.n_levels}"
        )
    h0 = basis.unperturbed_energies(model.sp_energies)
    hi = interaction_matrix(model)
    rows, cols = structural_couplings(model.n_particles, model.n_levels)
    if rows.size:
        values = np.asarray(hi[rows, cols]).ravel()
    else:
        values = np.zeros(0)
    diagonal = h0 + hi.diagonal()
    for a in (diagonal, values, h0):
        a.setflags(write=False)
    return SparseHamiltonian(basis.dimension, diagonal, rows, cols, values, h0,
                             model.n_particles, model.n_levels)


def row_connectivity(h: SparseHamiltonian) -> np.ndarray:
    return np.bincount(h.rows, minlength=h.dimension) + np.bincount(h.cols, minlength=h.dimension)


def connectivity_bounds(n_particles: int, n_levels: int) -> tuple[int, int]:
    """Fewest and most structurally coupled states per row.

    The minimum, ``(M-1)(M+2)/2``, belongs to states with every boson on
    one level.  The maximum, ``N(M-1)[1 + (N-1)(M-2)/4]``, belongs to
    states with single or empty occupations, which only exist for M >= N;
    for M < N the formula is still returned but is not attained.  A single
    boson has no two-body couplings, so N = 1 gives ``(0, 0)``.
    """
    n, m = n_particles, n_levels
    if n < 2:
        return 0, 0
    m_min = (m - 1) * (m + 2) // 2
    m_max = n * (m - 1) * (4 + (n - 1) * (m - 2)) // 4
    return m_min, m_max
