import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_bed_residual
from tbri.basis import enumerate_basis
from tbri.hamiltonian import assemble, draw_disorder
from tbri.spectral import diagonalize
from tbri.thermal import (
    BedDomainError,
    Verdict,
    all_occupations,
    bed_comparison,
    classify,
    energy_width,
    local_criterion,
    occupation_fluctuations,
    occupation_numbers,
    solve_bed,
)


@pytest.fixture(scope="module")
def system():
    b = enumerate_basis(4, 6)
    model = draw_disorder(4, 6, 0.3, seed=2)
    h = assemble(model, b)
    return b, model, h, diagonalize(h)


def test_occupation_identities(system):
    b, model, h, spec = system
    occ = all_occupations(spec, b)
    assert np.allclose(occ.sum(axis=1), 4.0, rtol=1e-12)
    h0_expect = (spec.coefficients**2).T @ h.h0_diagonal
    assert np.allclose(occ @ model.sp_energies, h0_expect, rtol=1e-12)
    d = occupation_numbers(spec, b, 7, model.sp_energies)
    assert np.allclose(d.values, occ[7])
    assert math.isclose(d.dressed_energy, h0_expect[7], rel_tol=1e-12)


@given(st.integers(2, 12), st.integers(1, 8), st.floats(0.02, 0.98), st.integers(0, 2**32 - 1))
@settings(max_examples=80, deadline=None)
def test_bed_roundtrip(m, n, frac, seed):
    eps = np.sort(np.random.default_rng(seed).uniform(0, m, m))
    if eps[-1] - eps[0] < 1e-3:
        return
    e = n * (eps[0] + frac * (eps[-1] - eps[0]))
    sol = solve_bed(eps, n, e)
    r_n, r_e = brute_bed_residual(eps, n, e, sol.beta, sol.z)
    assert abs(r_n) < 1e-9 * n and abs(r_e) < 1e-9 * max(1.0, abs(e))
    assert np.all(sol.predicted > 0)
    assert (sol.beta < 0) == (e > n * eps.mean())


def test_bed_infinite_temperature_and_domain():
    eps = np.array([0.0, 1.0, 2.5, 4.0])
    sol = solve_bed(eps, 3, 3 * eps.mean())
    assert sol.beta == 0.0 and math.isnan(sol.mu)
    assert np.allclose(sol.predicted, 0.75)
    with pytest.raises(BedDomainError):
        solve_bed(eps, 3, 0.0)
    with pytest.raises(BedDomainError):
        solve_bed(eps, 3, 12.5)
    with pytest.raises(BedDomainError):
        solve_bed(eps, 0, 1.0)


def test_bed_comparison_reports_failed_branch(system):
    b, model, _, spec = system
    d = occupation_numbers(spec, b, 0, model.sp_energies)
    cmp = bed_comparison(d, model.sp_energies)
    assert np.isfinite(cmp.chi2_dressed)
    if cmp.bare is None:
        assert math.isnan(cmp.chi2_bare) and cmp.errors


def test_fluctuations_gaussian_null():
    rng = np.random.default_rng(5)
    samples = rng.normal(1.0, 0.2, size=(500, 6))
    samples[:, 2] = 0.5  # frozen orbital is excluded
    rep = occupation_fluctuations(samples)
    assert rep.excluded_orbitals == (2,)
    assert rep.zeta.size == 500 * 5
    assert rep.passed


def test_classifier_rules(system):
    _, _, h, spec = system
    v = classify(0, 1.0, delta0=2.0, n_pc=10.0, v=0.3)
    assert v.d_loc == 0.2 and v.verdict is Verdict.THERMAL
    assert classify(0, 1.0, 2.0, 10.0, 0.3, fluctuation_pass=False).verdict is Verdict.NON_THERMAL
    assert classify(0, 1.0, 2.0, 10.0, 0.1).verdict is Verdict.NON_THERMAL
    assert classify(0, 1.0, 0.0, 1.0, 0.3).verdict is Verdict.NON_THERMAL
    t = local_criterion(spec, h.h0_diagonal, 20, 0.3)
    assert math.isclose(t.delta0, energy_width(spec, h.h0_diagonal)[20])
    assert (t.verdict is Verdict.THERMAL) == (t.ratio > 1)
