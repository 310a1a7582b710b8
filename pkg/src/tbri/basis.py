"""Occupation-number (Fock) basis for N bosons on M single-particle levels.

States are ordered lexicographically *decreasing*, so ``(N, 0, ..., 0)`` is
state 0 and ``(0, ..., 0, N)`` is the last one.  Lookup uses combinatorial
ranking, O(M) per state, and is vectorized over batches of states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

MAX_OCCUPATION = 255  # occupations are stored as uint8
DEFAULT_MAX_STATES = 10_000_000


class BasisSizeError(ValueError):
    """Requested basis is too large to index or to hold in memory."""


class StateNotFoundError(KeyError):
    """Occupation vector does not belong to the basis."""


def basis_dimension(n_particles: int, n_levels: int) -> int:
    """Number of ways to put ``n_particles`` bosons on ``n_levels`` levels.

    Exact integer arithmetic, so large arguments never wrap around.
    """
    if n_particles < 1 or n_levels < 1:
        raise ValueError(f"need n_particles >= 1 and n_levels >= 1, got ({n_particles}, {n_levels})")
    return math.comb(n_particles + n_levels - 1, n_particles)


def _ways(n: int, levels: int) -> int:
    # distributions of n bosons over `levels` levels, including the empty cases
    if levels == 0:
        return 1 if n == 0 else 0
    return math.comb(n + levels - 1, levels - 1)


@lru_cache(maxsize=None)
def _enumerate(n: int, m: int) -> np.ndarray:
    if m == 1:
        return np.array([[n]], dtype=np.uint8)
    blocks = []
    for first in range(n, -1, -1):
        rest = _enumerate(n - first, m - 1)
        head = np.full((rest.shape[0], 1), first, dtype=np.uint8)
        blocks.append(np.hstack([head, rest]))
    return np.vstack(blocks)


def _rank_table(n: int, m: int) -> np.ndarray:
    """``table[i, r, v]``: number of states ranked before any state whose
    prefix up to level ``i`` matches and whose level-``i`` entry is ``v``,
    given ``r`` particles left before level ``i``."""
    table = np.zeros((m, n + 1, n + 1), dtype=np.int64)
    for i in range(m - 1):
        rest = m - i - 1
        for r in range(n + 1):
            acc = 0
            for v in range(r, -1, -1):
                table[i, r, v] = acc
                acc += _ways(r - v, rest)
    return table


@dataclass(frozen=True, eq=False)
class FockBasis:
    n_particles: int
    n_levels: int
    states: np.ndarray = field(repr=False)
    _table: np.ndarray = field(repr=False)

    @property
    def dimension(self) -> int:
        return self.states.shape[0]

    def __len__(self) -> int:
        return self.dimension

    def __getitem__(self, i: int) -> tuple[int, ...]:
        return tuple(int(x) for x in self.states[i])

    def rank(self, states: np.ndarray) -> np.ndarray:
        """Vectorized index lookup for a ``(n, M)`` array of valid states."""
        states = np.asarray(states, dtype=np.int64)
        remaining = self.n_particles - np.concatenate(
            [np.zeros((states.shape[0], 1), dtype=np.int64), np.cumsum(states[:, :-1], axis=1)],
            axis=1,
        )
        levels = np.arange(self.n_levels)
        return self._table[levels, remaining, states].sum(axis=1)

    def lookup(self, state: Sequence[int]) -> int:
        v = np.asarray(state, dtype=np.int64)
        if v.shape != (self.n_levels,) or np.any(v < 0) or int(v.sum()) != self.n_particles:
            raise StateNotFoundError(
                f"{tuple(state)} is not a state of N={self.n_particles}, M={self.n_levels}"
            )
        return int(self.rank(v[None, :])[0])

    def occupations(self, dtype=np.float64) -> np.ndarray:
        return self.states.astype(dtype)

    def unperturbed_energies(self, sp_energies: Iterable[float]) -> np.ndarray:
        eps = np.asarray(list(sp_energies), dtype=np.float64)
        return self.states.astype(np.float64) @ eps

    def to_text(self) -> str:
        """Debug listing, one space-separated occupation vector per line."""
        return "".join(" ".join(str(int(x)) for x in row) + "\n" for row in self.states)


def enumerate_basis(n_particles: int, n_levels: int, max_states: int = DEFAULT_MAX_STATES) -> FockBasis:
    dim = basis_dimension(n_particles, n_levels)
    if n_particles > MAX_OCCUPATION:
        raise BasisSizeError(f"n_particles={n_particles} exceeds the uint8 occupation limit {MAX_OCCUPATION}")
    if dim > max_states:
        raise BasisSizeError(
            f"basis of N={n_particles}, M={n_levels} has {dim} states, above the limit of {max_states}"
        )
    states = _enumerate(n_particles, n_levels).copy()
    states.setflags(write=False)
    return FockBasis(n_particles, n_levels, states, _rank_table(n_particles, n_levels))
