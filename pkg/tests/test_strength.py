import math

import numpy as np
import pytest

from tbri.basis import enumerate_basis
from tbri.hamiltonian import assemble, connectivity_bounds, draw_disorder
from tbri.spectral import diagonalize
from tbri.strength import (
    Shape,
    StrengthProfile,
    averaged_profile,
    crossover_estimate,
    effective_spacing,
    f_function,
    fermi_golden_rule_width,
    fit_shapes,
    gaussian_masses,
    lorentzian_masses,
    scaled_edges,
    scaled_strength_histograms,
    strength_function,
)


def _spec(v, n=4, m=6, seed=3):
    b = enumerate_basis(n, m)
    h = assemble(draw_disorder(n, m, v, seed), b)
    return b, h, diagonalize(h)


def test_sum_rules():
    _, h, spec = _spec(0.2)
    dense = h.to_dense()
    for k in (0, 17, h.dimension // 2, h.dimension - 1):
        p = strength_function(spec, k)
        assert math.isclose(p.centroid, dense[k, k], rel_tol=1e-9, abs_tol=1e-12)
        off = np.delete(dense[k], k)
        assert math.isclose(p.exact_width**2, off @ off, rel_tol=1e-9)
        assert math.isclose(p.weights.sum(), 1.0, rel_tol=1e-12)


def test_f_function_moments():
    _, h, spec = _spec(0.2)
    e0 = h.h0_diagonal
    a = 40
    p = f_function(spec, a, e0)
    w = spec.coefficients[:, a] ** 2
    assert math.isclose(p.centroid, w @ e0, rel_tol=1e-12)


def test_zero_interaction_is_delta():
    _, _, spec = _spec(0.0)
    assert strength_function(spec, 5).preferred_shape is Shape.DELTA


def test_model_masses_sum_to_one():
    edges = scaled_edges(21, 3.0)
    assert math.isclose(lorentzian_masses(edges, 0.1, 0.5).sum(), 1.0)
    assert math.isclose(gaussian_masses(edges, 0.1, 0.5).sum(), 1.0)


@pytest.mark.parametrize("model,shape", [(lorentzian_masses, Shape.BREIT_WIGNER),
                                         (gaussian_masses, Shape.GAUSSIAN)])
def test_fit_recovers_synthetic_shape(model, shape):
    edges = scaled_edges(51, 4.0) * 2.0
    masses = model(edges, 0.3, 1.7)
    prof = fit_shapes(StrengthProfile(0, 0.0, 2.0, edges, masses))
    assert prof.preferred_shape is shape
    fit = prof.fit_bw if shape is Shape.BREIT_WIGNER else prof.fit_gauss
    assert math.isclose(fit.width, 1.7, rel_tol=1e-5)
    assert math.isclose(fit.center, 0.3, abs_tol=1e-5)


def test_scaled_histograms_normalized():
    _, _, spec = _spec(0.1)
    masses, centroids, widths = scaled_strength_histograms(spec, np.arange(30))
    assert np.allclose(masses.sum(axis=1), 1.0)
    assert np.all(widths > 0)
    prof = averaged_profile(masses, widths.mean())
    assert math.isclose(prof.weights.sum(), 1.0)


def test_effective_spacing_and_crossover():
    _, h, _ = _spec(0.1)
    sp = effective_spacing(h)
    lo, hi = connectivity_bounds(4, 6)
    assert sp.m_eff.min() == lo and sp.m_eff.max() == hi
    assert np.all(sp.d_f > 0)
    vc, a, b = crossover_estimate(sp, 4)
    assert math.isclose(vc, sp.mean * math.sqrt(5))
    assert a < vc < b
    assert math.isclose(fermi_golden_rule_width(0.1, 0.5), 2 * math.pi * 0.01 / 0.5)
    with pytest.raises(ValueError):
        fermi_golden_rule_width(0.1, 0.0)


def test_isolated_rows_excluded():
    b = enumerate_basis(1, 4)
    sp = effective_spacing(assemble(draw_disorder(1, 4, 0.1, 0), b))
    assert sp.n_excluded == 4
    assert np.all(np.isnan(sp.d_f))
    with pytest.raises(ValueError):
        crossover_estimate(sp, 1)
