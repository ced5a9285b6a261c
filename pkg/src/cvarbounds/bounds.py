"""Deterministic CVaR sandwiches for X built from a related variable Y.

Two kinds of discrepancy are supported:

* a uniform one, ``sup_z |F_X(z) - F_Y(z)| <= eps`` (one-sided versions for each
  bound), giving closed-form bounds in terms of CVaR of Y at shifted levels;
* a pointwise envelope ``g``, either given directly or as the integral of a
  density discrepancy ``h``.

CVaR of Y is supplied as a callable ``alpha -> CVaR_alpha(Y)`` so that Y may be
analytic, empirical or itself a constructed CDF. That callable must be safe to
call concurrently if the bound routines are.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .riskcore import StepCdf, check_level

__all__ = [
    "SupportBounds",
    "Envelope",
    "BoundReport",
    "CASES",
    "uniform_upper_bound",
    "uniform_lower_bound",
    "construct_upper_cdf",
    "construct_lower_cdf",
    "g_envelope_lower_cdf",
    "density_h_to_g",
    "general_g_bounds",
    "quantile_integral",
]

CvarFn = Callable[[float], float]

CASES = ("U_main", "U_degenerate", "L_main", "L_degenerate")


def _check_eps(eps: float, upper: float = 1.0) -> float:
    eps = float(eps)
    if not (0.0 <= eps <= upper) or math.isnan(eps):
        raise ValueError(f"eps must lie in [0, {upper:g}], got {eps!r}")
    return eps


@dataclass(frozen=True)
class SupportBounds:
    """Essential lower/upper bounds of X and Y; infinities are allowed."""

    a_x: float = -math.inf
    b_x: float = math.inf
    a_y: float = -math.inf
    b_y: float = math.inf

    def __post_init__(self):
        for name in ("a_x", "b_x", "a_y", "b_y"):
            v = float(getattr(self, name))
            if math.isnan(v):
                raise ValueError(f"{name} is NaN")
            object.__setattr__(self, name, v)
        if self.a_x > self.b_x or self.a_y > self.b_y:
            raise ValueError("support lower end exceeds upper end")

    @classmethod
    def common(cls, a: float = -math.inf, b: float = math.inf) -> "SupportBounds":
        return cls(a, b, a, b)

    @property
    def a_min(self) -> float:
        return min(self.a_x, self.a_y)

    @property
    def b_max(self) -> float:
        return max(self.b_x, self.b_y)

    @property
    def b_min(self) -> float:
        return min(self.b_x, self.b_y)

    def as_dict(self) -> dict:
        return {"a_x": self.a_x, "b_x": self.b_x, "a_y": self.a_y, "b_y": self.b_y}


@dataclass(frozen=True, eq=False)
class Envelope:
    """A uniform discrepancy, a CDF envelope ``g`` or a density envelope ``h``.

    ``g`` and ``h`` are piecewise linear through their knots. ``g`` is 0 left of
    the first knot (so it may jump there) and constant right of the last one;
    ``h`` is 0 outside its knot span.
    """

    kind: str
    eps: float = 0.0
    x: np.ndarray = field(default_factory=lambda: np.empty(0))
    v: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        if self.kind not in ("uniform", "piecewise_linear_g", "density_h"):
            raise ValueError(f"unknown envelope kind {self.kind!r}")
        if self.kind == "uniform":
            object.__setattr__(self, "eps", _check_eps(self.eps))
            return
        x = np.asarray(self.x, dtype=float).ravel()
        v = np.asarray(self.v, dtype=float).ravel()
        if x.size == 0 or x.size != v.size:
            raise ValueError("envelope needs matching, non-empty knot arrays")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise ValueError("envelope knots must be finite")
        if np.any(np.diff(x) <= 0):
            raise ValueError("envelope knots must be strictly increasing in x")
        if np.any(v < 0):
            raise ValueError("envelope values must be nonnegative")
        x.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)

    @classmethod
    def uniform(cls, eps: float) -> "Envelope":
        return cls("uniform", eps=eps)

    @classmethod
    def piecewise_linear(cls, x, v) -> "Envelope":
        return cls("piecewise_linear_g", x=x, v=v)

    @classmethod
    def density(cls, x, v) -> "Envelope":
        return cls("density_h", x=x, v=v)

    @property
    def is_monotone(self) -> bool:
        return self.kind == "uniform" or bool(np.all(np.diff(self.v) >= 0))

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "uniform":
            out = np.full(z.shape, self.eps)
        elif self.kind == "piecewise_linear_g":
            out = np.where(z < self.x[0], 0.0, np.interp(z, self.x, self.v))
        else:
            inside = (z >= self.x[0]) & (z <= self.x[-1])
            out = np.where(inside, np.interp(z, self.x, self.v), 0.0)
        return float(out) if out.ndim == 0 else out

    def left_limit(self, z):
        """``g(z-)``; differs from ``g(z)`` only at the first knot."""
        if self.kind != "piecewise_linear_g":
            raise TypeError("left limits are only defined for piecewise_linear_g")
        z = np.asarray(z, dtype=float)
        out = np.where(z <= self.x[0], 0.0, np.interp(z, self.x, self.v))
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BoundReport:
    """A certified CVaR interval; either side may be absent."""

    lower: Optional[float]
    upper: Optional[float]
    case_taken: tuple
    guarantee: float = 1.0
    inputs: dict = field(default_factory=dict)
    absent: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 < self.guarantee <= 1.0):
            raise ValueError("guarantee must lie in (0, 1]")
        for c in self.case_taken:
            if c not in CASES:
                raise ValueError(f"unknown case {c!r}")
        if self.lower is not None and self.upper is not None:
            if self.lower > self.upper + 1e-12:
                raise ValueError(f"lower bound {self.lower} exceeds upper bound {self.upper}")

    @property
    def width(self) -> Optional[float]:
        if self.lower is None or self.upper is None:
            return None
        return self.upper - self.lower

    def contains(self, value: float) -> bool:
        lo_ok = self.lower is None or self.lower <= value
        hi_ok = self.upper is None or value <= self.upper
        return lo_ok and hi_ok

    def as_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "case_taken": list(self.case_taken),
            "guarantee": self.guarantee,
            "inputs": self.inputs,
            "absent": self.absent,
        }


def merge_reports(upper: BoundReport, lower: BoundReport) -> BoundReport:
    return BoundReport(
        lower=lower.lower,
        upper=upper.upper,
        case_taken=upper.case_taken + lower.case_taken,
        guarantee=min(upper.guarantee, lower.guarantee),
        inputs={**upper.inputs, **lower.inputs},
        absent={**upper.absent, **lower.absent},
    )


# --------------------------------------------------------------------------
# uniform discrepancy: closed forms


def uniform_upper_bound(cvar_y: CvarFn, alpha: float, eps: float,
                        supports: SupportBounds) -> BoundReport:
    """Upper bound on CVaR_alpha(X) when ``F_Y - F_X <= eps`` everywhere."""
    alpha = check_level(alpha)
    eps = _check_eps(eps)
    if not (math.isfinite(supports.b_x) and math.isfinite(supports.b_y)):
        raise ValueError("the upper bound needs finite b_x and b_y")
    b = supports.b_max
    inputs = {"alpha": alpha, "eps": eps, **supports.as_dict()}
    if eps == 0.0:
        return BoundReport(None, float(cvar_y(alpha)), ("U_main",), inputs=inputs)
    if alpha > eps:
        r = eps / alpha
        upper = r * b + (1.0 - r) * float(cvar_y(alpha - eps))
        return BoundReport(None, upper, ("U_main",), inputs=inputs)
    return BoundReport(None, b, ("U_degenerate",), inputs=inputs)


def uniform_lower_bound(cvar_y: CvarFn, mean_y: float, alpha: float, eps: float,
                        supports: SupportBounds) -> BoundReport:
    """Lower bound on CVaR_alpha(X) when ``F_X - F_Y <= eps`` everywhere.

    The degenerate branch (``alpha + eps > 1``) carries the overall ``1/alpha``
    factor; ``mean_y`` is only read there.
    """
    alpha = check_level(alpha)
    eps = _check_eps(eps)
    inputs = {"alpha": alpha, "eps": eps, **supports.as_dict()}
    if eps == 0.0:
        return BoundReport(float(cvar_y(alpha)), None, ("L_main",), inputs=inputs)
    if alpha + eps <= 1.0:
        r = eps / alpha
        lower = (1.0 + r) * float(cvar_y(alpha + eps)) - r * float(cvar_y(eps))
        return BoundReport(lower, None, ("L_main",), inputs=inputs)
    a = supports.a_min
    if not math.isfinite(a):
        raise ValueError("the degenerate lower bound needs finite a_x and a_y")
    lower = (float(mean_y) - eps * float(cvar_y(eps)) + (alpha + eps - 1.0) * a) / alpha
    return BoundReport(lower, None, ("L_degenerate",), inputs=inputs)


# --------------------------------------------------------------------------
# uniform discrepancy: the dominating constructions


def _first_above(cdf: StepCdf, level: float) -> float:
    """``inf{y : F(y) > level}``, i.e. ``VaR_{1-level}`` without the round trip through 1 - level."""
    j = int(np.searchsorted(cdf.levels, level, side="right"))
    return float(cdf.breakpoints[min(j, len(cdf) - 1)])


def construct_upper_cdf(f_y: StepCdf, eps: float, supports: SupportBounds) -> StepCdf:
    """Step CDF ``F_Y^U`` that is dominated by every admissible ``F_X``.

    Pieces: 0 below ``max(a_x, VaR_{1-eps}(Y))``; ``min(F_Y - eps, 1 - eps)``
    up to ``b_min``; ``1 - eps`` on ``[b_min, b_max)``; 1 from ``b_max`` on.
    When ``b_y > b_x`` the middle plateau covers ``[b_x, b_y)``, where every
    admissible ``F_X`` already equals 1.
    """
    eps = _check_eps(eps)
    if eps >= 1.0:
        raise ValueError("construct_upper_cdf needs eps < 1")
    if not (math.isfinite(supports.b_x) and math.isfinite(supports.b_y)):
        raise ValueError("construct_upper_cdf needs finite b_x and b_y")
    if f_y.breakpoints[-1] > supports.b_y:
        raise ValueError("f_y puts mass above b_y")
    start = max(supports.a_x, _first_above(f_y, eps))
    b_min, b_max = supports.b_min, supports.b_max

    y = f_y.breakpoints
    pts = np.concatenate((y, [b_min, b_max], [start] if math.isfinite(start) else []))
    pts = np.unique(pts)
    pts = pts[pts <= b_max]
    lev = np.minimum(f_y(pts) - eps, 1.0 - eps)
    lev = np.where(pts >= b_min, 1.0 - eps, lev)
    lev = np.where(pts < start, 0.0, lev)
    lev = np.where(pts >= b_max, 1.0, lev)
    return StepCdf.from_pieces(pts, lev)


def construct_lower_cdf(f_y: StepCdf, eps: float, supports: SupportBounds) -> StepCdf:
    """Step CDF ``F_Y^L`` that dominates every admissible ``F_X``.

    Pieces: 0 below ``a_min``; ``eps`` on ``[a_min, a_y)``; ``min(F_Y + eps, 1)``
    up to ``min(VaR_eps(Y), b_x)``; 1 from there on.
    """
    eps = _check_eps(eps)
    if not (math.isfinite(supports.a_x) and math.isfinite(supports.a_y)):
        raise ValueError("construct_lower_cdf needs finite a_x and a_y")
    if f_y.breakpoints[0] < supports.a_y:
        raise ValueError("f_y puts mass below a_y")
    a_min, a_y = supports.a_min, supports.a_y
    top = _first_above(f_y, 1.0 - eps) if eps > 0 else math.inf
    top = min(top, supports.b_x)

    y = f_y.breakpoints
    pts = np.concatenate((y, [a_min, a_y], [top] if math.isfinite(top) else []))
    pts = np.unique(pts)
    pts = pts[pts >= a_min]
    if math.isfinite(top):
        pts = pts[pts <= top]
    lev = np.minimum(f_y(pts) + eps, 1.0)
    lev = np.where(pts < a_y, eps, lev)
    lev = np.where(pts >= top, 1.0, lev)
    return StepCdf.from_pieces(pts, lev)


# --------------------------------------------------------------------------
# non-uniform envelopes


def _refinement_grid(f_y: StepCdf, g: Envelope, refine: int) -> np.ndarray:
    lo, hi = f_y.breakpoints[0] - 1.0, f_y.breakpoints[-1] + 1.0
    grid = np.concatenate((f_y.breakpoints, g.x, np.linspace(lo, hi, refine)))
    return np.unique(grid)


def g_envelope_lower_cdf(f_y: StepCdf, g: Envelope, refine: int = 1024) -> StepCdf:
    """Step CDF lying pointwise above ``min(1, F_Y + g)`` for nondecreasing ``g``.

    On each grid cell ``[t_k, t_{k+1})`` the level is ``F_Y(t_k) + g(t_{k+1}-)``,
    the supremum of ``F_Y + g`` over the cell, so the step CDF dominates the
    exact envelope and its CVaR stays a valid lower bound. The grid is the
    union of the breakpoints of ``f_y``, the knots of ``g`` and ``refine``
    uniform points on ``[y_1 - 1, y_k + 1]``.
    """
    if g.kind != "piecewise_linear_g":
        raise ValueError("g_envelope_lower_cdf needs a piecewise_linear_g envelope")
    if not g.is_monotone:
        raise ValueError("g must be nondecreasing")
    t = _refinement_grid(f_y, g, refine)
    g_next = np.append(g.left_limit(t[1:]), g(t[-1]))
    lev = np.minimum(1.0, f_y(t) + g_next)
    return StepCdf.from_pieces(t, lev)


def density_h_to_g(h: Envelope, refine: int = 64, conservative: bool = False) -> Envelope:
    """Integrate a piecewise-linear density discrepancy into a CDF envelope.

    ``h`` is zero outside its knot span, so ``g`` starts at 0 and is constant
    after the last knot. Each knot interval is split into ``refine`` pieces and
    ``g`` is stored exactly (a quadratic in ``z``) at every split point.

    Linear interpolation between split points undershoots ``g`` where ``h``
    decreases, by at most ``|h'| d^2 / 8`` on a piece of width ``d``. With
    ``conservative=True`` every stored value is lifted by the largest such
    gap, so the envelope is never below the true integral.
    """
    if h.kind != "density_h":
        raise ValueError("density_h_to_g needs a density_h envelope")
    xs, hs = h.x, h.v
    out_x = [xs[:1]]
    out_g = [np.zeros(1)]
    acc = 0.0
    gap = 0.0
    for x0, x1, h0, h1 in zip(xs[:-1], xs[1:], hs[:-1], hs[1:]):
        width = x1 - x0
        d = np.linspace(0.0, width, refine + 1)[1:]
        slope = (h1 - h0) / width
        gap = max(gap, abs(slope) * (width / refine) ** 2 / 8.0)
        out_x.append(x0 + d)
        out_g.append(acc + h0 * d + 0.5 * slope * d * d)
        acc += 0.5 * (h0 + h1) * width
        out_g[-1][-1] = acc
    x = np.concatenate(out_x)
    x[-1] = xs[-1]
    gv = np.maximum.accumulate(np.concatenate(out_g))
    if conservative:
        gv = gv + gap
    return Envelope.piecewise_linear(x, gv)


def quantile_integral(z: np.ndarray, start: np.ndarray, end: np.ndarray,
                      tail: float, lo: float, hi: float) -> Optional[float]:
    """Exact ``integral_lo^hi inf{x : G(x) >= tau} dtau`` for a piecewise-linear G.

    ``G`` is 0 left of ``z[0]``, linear on each ``[z[k], z[k+1])`` from
    ``start[k]`` to the left limit ``end[k]``, and equal to ``tail`` from
    ``z[-1]`` on. ``G`` need not be monotone: the generalized inverse only
    sees its running maximum. Returns None when ``G`` never reaches ``hi``.
    """
    pieces = []  # (tau0, tau1, x0, x1): inverse linear from x0 to x1 on (tau0, tau1]
    cur = 0.0
    for k in range(len(z)):
        s = start[k] if k < len(z) - 1 else tail
        if s > cur:
            pieces.append((cur, s, z[k], z[k]))
            cur = s
        if k == len(z) - 1:
            break
        e = end[k]
        if e > cur:
            x0 = z[k] + (cur - s) / (e - s) * (z[k + 1] - z[k])
            pieces.append((cur, e, x0, z[k + 1]))
            cur = e
    if cur < hi:
        return None
    total = 0.0
    for t0, t1, x0, x1 in pieces:
        a, b = max(t0, lo), min(t1, hi)
        if b <= a:
            continue
        if x0 == x1:
            total += x0 * (b - a)
        else:
            xa = x0 + (x1 - x0) * (a - t0) / (t1 - t0)
            xb = x0 + (x1 - x0) * (b - t0) / (t1 - t0)
            total += 0.5 * (xa + xb) * (b - a)
    return total


def general_g_bounds(f_y: StepCdf, g: Envelope, alpha: float) -> BoundReport:
    """CVaR bounds from ``|F_X - F_Y| <= g`` for any nonnegative piecewise-linear g.

    Both bounds are ``(1/alpha) integral_{1-alpha}^1`` of the generalized
    inverse of ``F_Y + g`` (lower) or ``F_Y - g`` (upper). The integrands are
    piecewise linear in the level, so the integrals are evaluated exactly.
    The upper side is absent when ``F_Y - g`` never reaches level 1.
    """
    alpha = check_level(alpha)
    if g.kind == "uniform":
        raise ValueError("general_g_bounds needs knots; use uniform_* for a constant eps")
    if g.kind == "density_h":
        g = density_h_to_g(g, conservative=True)
    z = np.unique(np.concatenate((f_y.breakpoints, g.x)))
    fz = f_y(z)
    g_at = g(z)
    g_next = g.left_limit(z[1:])
    lo = 1.0 - alpha

    lower_int = quantile_integral(z, fz + g_at, fz[:-1] + g_next, 1.0 + g_at[-1], lo, 1.0)
    upper_int = quantile_integral(z, fz - g_at, fz[:-1] - g_next, 1.0 - g_at[-1], lo, 1.0)
    inputs = {"alpha": alpha, "envelope": g.kind}
    absent = {}
    upper = None
    if upper_int is None:
        absent["upper"] = "unbounded: F_Y - g never reaches level 1"
    else:
        upper = upper_int / alpha
    lower = lower_int / alpha
    cases = ("L_main",) if upper is None else ("U_main", "L_main")
    return BoundReport(lower, upper, cases, inputs=inputs, absent=absent)
