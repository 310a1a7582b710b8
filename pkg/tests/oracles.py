"""Independent reference implementations used only by the tests."""

from __future__ import annotations

import itertools
import math

import numpy as np


def brute_basis(n: int, m: int) -> list[tuple[int, ...]]:
    """All occupation vectors, lexicographically decreasing."""
    states = [s for s in itertools.product(range(n, -1, -1), repeat=m) if sum(s) == n]
    return sorted(states, reverse=True)


def _annihilate(state, s):
    if state[s] == 0:
        return None, 0.0
    out = list(state)
    amp = math.sqrt(out[s])
    out[s] -= 1
    return tuple(out), amp


def _create(state, s):
    out = list(state)
    out[s] += 1
    return tuple(out), math.sqrt(out[s])


def apply_term(state, s1, s2, s3, s4):
    """``a+_{s1} a+_{s2} a_{s3} a_{s4} |state>`` as (state, amplitude)."""
    amp = 1.0
    for op, s in (("a", s4), ("a", s3), ("c", s2), ("c", s1)):
        if op == "a":
            state, f = _annihilate(state, s)
            if state is None:
                return None, 0.0
        else:
            state, f = _create(state, s)
        amp *= f
    return state, amp


def brute_interaction(n: int, m: int, tensor: np.ndarray, operator_sum: str) -> np.ndarray:
    """Dense H_I by explicit operator application on occupation vectors.

    ``"ordered"`` sums ``V a+ a+ a a`` over every ordered quadruple.
    ``"classes"`` takes one representative quadruple per symmetry class
    (s1 <= s2, s3 <= s4, pair (s1, s2) <= pair (s3, s4)) and adds the
    Hermitian part of its operator.
    """
    states = brute_basis(n, m)
    index = {s: i for i, s in enumerate(states)}
    dim = len(states)
    h = np.zeros((dim, dim))
    if operator_sum == "ordered":
        quads = [(q, 1.0) for q in itertools.product(range(m), repeat=4)]
    else:
        pairs = [(c, d) for c in range(m) for d in range(c, m)]
        quads = [((*p, *q), 1.0) for i, p in enumerate(pairs) for q in pairs[i:]]
    for (s1, s2, s3, s4), _ in quads:
        v = tensor[s1, s2, s3, s4]
        if v == 0:
            continue
        op = np.zeros((dim, dim))
        for j, st in enumerate(states):
            out, amp = apply_term(st, s1, s2, s3, s4)
            if out is not None:
                op[index[out], j] += amp
        h += v * (op if operator_sum == "ordered" else 0.5 * (op + op.T))
    return h


def brute_bed_residual(eps, n, energy, beta, z):
    occ = 1.0 / (np.exp(beta * np.asarray(eps)) / z - 1.0)
    return occ.sum() - n, occ @ np.asarray(eps) - energy
