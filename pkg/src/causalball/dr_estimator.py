"""Augmented IPW point estimate, influence-function variance and Wald interval."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validate import as_arms, as_sample
from .errors import SchemaError

# Acklam's rational approximation to the standard normal quantile
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771670e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _acklam(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
                / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    if p > 1.0 - _P_LOW:
        return -_acklam(1.0 - p)
    q = p - 0.5
    r = q * q
    return ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
            / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))


def norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def norm_ppf(p: float) -> float:
    """Standard normal quantile: rational approximation plus one Halley step."""
    if not 0.0 < p < 1.0:
        raise SchemaError(f"probability must lie in (0, 1), got {p}")
    x = _acklam(p)
    e = norm_cdf(x) - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def critical_value(m: float) -> float:
    if not 0.0 < m < 1.0:
        raise SchemaError(f"significance level must lie in (0, 1), got {m}")
    return norm_ppf(1.0 - m / 2.0)


@dataclass
class DrEstimate:
    delta_hat: float
    v_hat: float
    ci_lower: float
    ci_upper: float
    level: float
    influence: np.ndarray = field(repr=False)
    n: int = 0
    caveat: str = ("interval conditions on the selected adjustment sets; "
                   "selection uncertainty is not propagated")

    @property
    def se(self) -> float:
        return math.sqrt(self.v_hat / self.n)

    def covers(self, value: float) -> bool:
        return self.ci_lower <= value <= self.ci_upper


def _inputs(y, d, e_hat, b1_hat, b0_hat):
    y = as_sample(y, "y", min_len=1)
    n = y.size
    d = as_arms(d, n).astype(np.float64)
    arrs = []
    for name, v in (("e_hat", e_hat), ("b1_hat", b1_hat), ("b0_hat", b0_hat)):
        a = as_sample(v, name, min_len=1)
        if a.size != n:
            raise SchemaError(f"{name} has length {a.size}, expected {n}")
        arrs.append(a)
    e = arrs[0]
    if np.any(e <= 0.0) or np.any(e >= 1.0):
        raise SchemaError("propensities must lie strictly inside (0, 1); clamp them first")
    return y, d, e, arrs[1], arrs[2]


def aipw(y, d, e_hat, b1_hat, b0_hat) -> float:
    y, d, e, b1, b0 = _inputs(y, d, e_hat, b1_hat, b0_hat)
    treated = (d * y - (d - e) * b1) / e
    control = ((1.0 - d) * y + (d - e) * b0) / (1.0 - e)
    return float(np.mean(treated) - np.mean(control))


def influence_and_variance(y, d, e_hat, b1_hat, b0_hat, delta_hat):
    y, d, e, b1, b0 = _inputs(y, d, e_hat, b1_hat, b0_hat)
    if not np.isfinite(delta_hat):
        raise SchemaError("delta_hat must be finite")
    phi = d * (y - b1) / e - (1.0 - d) * (y - b0) / (1.0 - e) + b1 - b0 - delta_hat
    return phi, float(np.mean(phi * phi))


def wald_ci(delta_hat, v_hat, n, m=0.05):
    if v_hat < 0 or n < 1:
        raise SchemaError("need v_hat >= 0 and n >= 1")
    half = critical_value(m) * math.sqrt(v_hat) / math.sqrt(n)
    return delta_hat - half, delta_hat + half


def estimate(y, d, e_hat, b1_hat, b0_hat, m=0.05) -> DrEstimate:
    delta = aipw(y, d, e_hat, b1_hat, b0_hat)
    phi, v = influence_and_variance(y, d, e_hat, b1_hat, b0_hat, delta)
    lo, hi = wald_ci(delta, v, phi.size, m)
    return DrEstimate(delta, v, lo, hi, m, phi, phi.size)
