import numpy as np
import pytest

from tbri.basis import enumerate_basis
from tbri.hamiltonian import assemble, draw_disorder
from tbri.spectral import DimensionTooLargeError, diagonalize, diagonalize_dense, dos, fix_signs, residual_norms


@pytest.fixture(scope="module")
def system():
    b = enumerate_basis(3, 5)
    h = assemble(draw_disorder(3, 5, 0.3, seed=6), b)
    return b, h, diagonalize(h)


def test_eigenpairs(system):
    _, h, spec = system
    assert np.all(np.diff(spec.eigenvalues) >= 0)
    assert residual_norms(h, spec).max() < 1e-10
    c = spec.coefficients
    assert np.allclose(c.T @ c, np.eye(spec.dimension), atol=1e-12)
    assert np.allclose(spec.weights().sum(axis=0), 1.0)


def test_sign_convention(system):
    c = system[2].coefficients
    lead = c[np.argmax(np.abs(c), axis=0), np.arange(c.shape[1])]
    assert np.all(lead > 0)
    v = -np.eye(3)
    assert np.array_equal(fix_signs(v), np.eye(3))


def test_zero_interaction_returns_sorted_unperturbed(system):
    b = enumerate_basis(2, 2)
    model = draw_disorder(2, 2, 0.0, seed=1)
    spec = diagonalize(assemble(model, b))
    assert np.allclose(spec.eigenvalues, np.sort(b.unperturbed_energies(model.sp_energies)))


def test_dimension_cap():
    h = assemble(draw_disorder(3, 5, 0.1, seed=0), enumerate_basis(3, 5))
    with pytest.raises(DimensionTooLargeError):
        diagonalize(h, max_dimension=10)
    with pytest.raises(DimensionTooLargeError):
        diagonalize_dense(np.eye(5), max_dimension=4)


def test_deterministic(system):
    _, h, spec = system
    again = diagonalize(h)
    assert np.array_equal(again.eigenvalues, spec.eigenvalues)
    assert np.array_equal(again.coefficients, spec.coefficients)


def test_dos_moments():
    e = np.random.default_rng(0).normal(size=2000)
    hist = dos(e, 40)
    assert hist.counts.sum() == 2000
    assert np.isclose((hist.density * np.diff(hist.bin_edges)).sum(), 2000)
    assert np.isclose(hist.mean, e.mean()) and np.isclose(hist.variance, e.var())
    flat = dos(np.full(7, 3.0), 10)
    assert flat.counts.sum() == 7 and flat.skewness == 0.0
    with pytest.raises(ValueError):
        dos(e, 1)
