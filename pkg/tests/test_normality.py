import numpy as np
import pytest

from tbri.normality import InsufficientSamplesError, normality_battery


def test_gaussian_passes():
    x = np.random.default_rng(1).normal(3.0, 2.0, size=5000)
    rep = normality_battery(x)
    assert rep.passed
    assert rep.n_samples == 5000


@pytest.mark.parametrize("draw", [
    lambda g: g.exponential(size=5000),
    lambda g: g.uniform(size=5000),
    lambda g: g.standard_t(3, size=5000),
])
def test_non_gaussian_fails(draw):
    assert not normality_battery(draw(np.random.default_rng(2))).passed


def test_sample_floor_and_constant():
    with pytest.raises(InsufficientSamplesError):
        normality_battery(np.zeros(999))
    rep = normality_battery(np.ones(2000))
    assert not rep.passed
    assert set(rep.as_dict()) >= {"skewness", "excess_kurtosis", "ks_pvalue", "passed"}
