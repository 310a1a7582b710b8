"""Composite normality battery shared by the eigenvector and occupation tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

MAX_ABS_SKEW = 0.15
MAX_ABS_EXCESS_KURTOSIS = 0.3
MIN_KS_PVALUE = 0.05
MIN_SAMPLES = 1000


class InsufficientSamplesError(ValueError):
    pass


@dataclass(frozen=True)
class NormalityReport:
    n_samples: int
    skewness: float
    excess_kurtosis: float
    ks_statistic: float
    ks_pvalue: float
    passed: bool

    def as_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "skewness": self.skewness,
            "excess_kurtosis": self.excess_kurtosis,
            "ks_statistic": self.ks_statistic,
            "ks_pvalue": self.ks_pvalue,
            "passed": self.passed,
        }


def normality_battery(samples: np.ndarray, min_samples: int = MIN_SAMPLES,
                      max_skew: float = MAX_ABS_SKEW,
                      max_kurtosis: float = MAX_ABS_EXCESS_KURTOSIS,
                      min_pvalue: float = MIN_KS_PVALUE) -> NormalityReport:
    """Pass iff |skew| and |excess kurtosis| are small and a KS test against
    the standard normal (after standardizing) is not rejected."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    x = x[np.isfinite(x)]
    if x.size < min_samples:
        raise InsufficientSamplesError(f"{x.size} samples, need at least {min_samples}")
    sd = x.std()
    if sd == 0:
        return NormalityReport(x.size, 0.0, float("inf"), 1.0, 0.0, False)
    z = (x - x.mean()) / sd
    skew = float(stats.skew(z))
    kurt = float(stats.kurtosis(z))
    ks = stats.kstest(z, "norm")
    passed = abs(skew) < max_skew and abs(kurt) < max_kurtosis and ks.pvalue > min_pvalue
    return NormalityReport(x.size, skew, kurt, float(ks.statistic), float(ks.pvalue), bool(passed))
