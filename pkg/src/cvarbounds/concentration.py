"""Sample-driven CVaR confidence bounds.

The ECDF bounds plug the empirical CDF into the uniform sandwich with the DKW
radius as the discrepancy; the surrogate bounds do the same for samples of a
related variable Y, inflating the radius by the declared X/Y discrepancy.
Each side holds with probability at least ``1 - delta`` on its own; no joint
coverage is claimed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bounds import BoundReport, SupportBounds
from .riskcore import SampleBatch, StepCdf, check_level, cvar_of_cdf, mean_of_cdf

__all__ = [
    "DiscrepancyBudget",
    "dkw_epsilon",
    "ecdf",
    "ecdf_cvar_bounds",
    "surrogate_cvar_bounds",
    "brown_deviation_bounds",
    "order_stat_upper_bound",
    "order_stat_lower_bound",
]


def _check_delta(delta: float, hi: float = 1.0, closed: bool = False) -> float:
    delta = float(delta)
    ok = 0.0 < delta <= hi if closed else 0.0 < delta < hi
    if not ok:
        bracket = "]" if closed else ")"
        raise ValueError(f"delta must lie in (0, {hi:g}{bracket}, got {delta!r}")
    return delta


def dkw_epsilon(delta: float, n: int) -> float:
    """One-sided DKW radius ``sqrt(ln(1/delta) / (2n))``."""
    delta = _check_delta(delta)
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    return math.sqrt(math.log(1.0 / delta) / (2.0 * n))


@dataclass(frozen=True)
class DiscrepancyBudget:
    """Model discrepancy ``eps_model`` plus the DKW sampling radius ``eta``."""

    delta: float
    n: int
    eps_model: float = 0.0

    def __post_init__(self):
        _check_delta(self.delta)
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        if not (0.0 <= self.eps_model <= 1.0):
            raise ValueError("eps_model must lie in [0, 1]")

    @property
    def eta(self) -> float:
        return dkw_epsilon(self.delta, self.n)

    @property
    def eps_prime(self) -> float:
        return min(self.eps_model + self.eta, 1.0)


def ecdf(batch: SampleBatch) -> StepCdf:
    return StepCdf.from_sample(batch)


def _sandwich_from_ecdf(cdf: StepCdf, alpha: float, eps: float, a: float, b: float,
                        *, strict_lower: bool, guarantee: float, inputs: dict) -> BoundReport:
    cases = []
    absent = {}

    upper: Optional[float] = None
    if not math.isfinite(b):
        absent["upper"] = "missing_upper_support"
    elif alpha > eps:
        r = eps / alpha
        upper = (1.0 - r) * cvar_of_cdf(cdf, alpha - eps) + r * b
        cases.append("U_main")
    else:
        upper = b
        cases.append("U_degenerate")

    lower: Optional[float] = None
    main = alpha + eps < 1.0 if strict_lower else alpha + eps <= 1.0
    if main:
        r = eps / alpha
        lower = (1.0 + r) * cvar_of_cdf(cdf, alpha + eps) - r * cvar_of_cdf(cdf, eps)
        cases.append("L_main")
    elif not math.isfinite(a):
        absent["lower"] = "missing_lower_support"
    else:
        # a radius beyond 1 carries no information; clip so CVaR_eps stays defined
        e = min(eps, 1.0)
        lower = ((alpha + e - 1.0) * a + mean_of_cdf(cdf) - e * cvar_of_cdf(cdf, e)) / alpha
        cases.append("L_degenerate")

    return BoundReport(lower, upper, tuple(cases), guarantee=guarantee,
                       inputs=inputs, absent=absent)


def _check_support(batch: SampleBatch, a: float, b: float) -> None:
    if batch.sorted[-1] > b:
        raise ValueError(f"upper support {b} lies below the sample maximum {batch.sorted[-1]}")
    if batch.sorted[0] < a:
        raise ValueError(f"lower support {a} lies above the sample minimum {batch.sorted[0]}")


def ecdf_cvar_bounds(batch: SampleBatch, alpha: float, delta: float,
                     support: SupportBounds) -> BoundReport:
    """Confidence bounds on CVaR_alpha(X) from an i.i.d. sample of X.

    ``support.a_min`` / ``support.b_max`` play the roles of the essential
    bounds ``a`` and ``b``; an infinite one leaves its side absent when it is
    needed.
    """
    alpha = check_level(alpha)
    eps = dkw_epsilon(delta, batch.n)
    a, b = support.a_min, support.b_max
    _check_support(batch, a, b)
    inputs = {"alpha": alpha, "delta": delta, "n": batch.n, "eps": eps, **support.as_dict()}
    return _sandwich_from_ecdf(ecdf(batch), alpha, eps, a, b, strict_lower=True,
                               guarantee=1.0 - delta, inputs=inputs)


def surrogate_cvar_bounds(batch_y: SampleBatch, alpha: float, budget: DiscrepancyBudget,
                          supports: SupportBounds) -> BoundReport:
    """Confidence bounds on CVaR_alpha(X) from an i.i.d. sample of a surrogate Y."""
    alpha = check_level(alpha)
    if budget.n != batch_y.n:
        raise ValueError(f"budget was built for n={budget.n}, batch has n={batch_y.n}")
    a, b = supports.a_min, supports.b_max
    _check_support(batch_y, supports.a_y, supports.b_y)
    eps = budget.eps_prime
    inputs = {"alpha": alpha, "delta": budget.delta, "n": budget.n,
              "eps_model": budget.eps_model, "eta": budget.eta, "eps": eps,
              **supports.as_dict()}
    return _sandwich_from_ecdf(ecdf(batch_y), alpha, eps, a, b, strict_lower=False,
                               guarantee=1.0 - budget.delta, inputs=inputs)


def brown_deviation_bounds(alpha: float, delta: float, n: int, a: float, b: float):
    """Radii ``(r_up, r_down)``: CVaR exceeds the estimate by more than ``r_up``,
    or falls short of it by more than ``r_down``, each with probability <= delta."""
    alpha = check_level(alpha)
    delta = _check_delta(delta, closed=True)
    if not (math.isfinite(a) and math.isfinite(b)) or a >= b:
        raise ValueError("need finite a < b")
    span = b - a
    r_up = span * math.sqrt(5.0 * math.log(3.0 / delta) / (alpha * n))
    r_down = span / alpha * math.sqrt(math.log(1.0 / delta) / (2.0 * n))
    return r_up, r_down


def order_stat_upper_bound(batch: SampleBatch, alpha: float, delta: float, b: float) -> float:
    alpha = check_level(alpha)
    delta = _check_delta(delta, hi=0.5, closed=True)
    z = batch.sorted
    if not math.isfinite(b) or b < z[-1]:
        raise ValueError(f"b={b} must be finite and at least the sample maximum {z[-1]}")
    n = z.size
    shift = math.sqrt(math.log(1.0 / delta) / (2.0 * n))
    zz = np.append(z, b)
    i = np.arange(1, n + 1)
    w = np.maximum(i / n - shift - (1.0 - alpha), 0.0)
    return float(b - np.dot(np.diff(zz), w) / alpha)


def order_stat_lower_bound(batch: SampleBatch, alpha: float, delta: float, a: float) -> float:
    alpha = check_level(alpha)
    delta = _check_delta(delta, hi=0.5, closed=True)
    z = batch.sorted
    if not math.isfinite(a) or a > z[0]:
        raise ValueError(f"a={a} must be finite and at most the sample minimum {z[0]}")
    n = z.size
    shift = math.sqrt(math.log(1.0 / delta) / (2.0 * n))
    zz = np.insert(z, 0, a)
    i = np.arange(0, n)
    w = np.maximum(np.minimum(1.0, i / n + shift) - (1.0 - alpha), 0.0)
    return float(z[-1] - np.dot(np.diff(zz), w) / alpha)
