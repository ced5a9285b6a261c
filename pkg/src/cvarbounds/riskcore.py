"""Exact VaR / CVaR evaluation on samples and piecewise-constant CDFs.

Everything downstream (the sandwich bounds, the concentration bounds, the
experiments) reduces to these few routines, so they are computed in closed
form: no quadrature happens in this module.

Conventions
-----------
* ``alpha`` is the *tail mass*: ``cvar(X, 0.05)`` averages the worst 5% of
  outcomes (large values are bad).
* VaR uses the strict quantile ``inf{y : F(y) > 1 - alpha}``.
* CVaR integrates the weak generalized inverse ``inf{y : F(y) >= v}`` over
  ``v in [1 - alpha, 1]``; the two inverses differ on a null set only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

__all__ = [
    "SampleBatch",
    "StepCdf",
    "check_level",
    "var_of_cdf",
    "cvar_of_cdf",
    "cvar_inf_form",
    "cvar_sorted_form",
    "mean_of_cdf",
    "cvar_function",
]

TailLevel = float


def check_level(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"tail level alpha must lie in (0, 1], got {alpha!r}")
    return alpha


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """A finite real sample together with its ascending order statistics."""

    values: np.ndarray
    sorted: np.ndarray

    def __init__(self, values: Iterable[float]):
        arr = np.asarray(values, dtype=float).ravel()
        if arr.size < 1:
            raise ValueError("a sample batch needs at least one value")
        if not np.all(np.isfinite(arr)):
            raise ValueError("sample values must be finite")
        object.__setattr__(self, "values", _frozen(arr))
        object.__setattr__(self, "sorted", _frozen(np.sort(arr)))

    @property
    def n(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"SampleBatch(n={self.n}, min={self.sorted[0]:g}, max={self.sorted[-1]:g})"


@dataclass(frozen=True, eq=False)
class StepCdf:
    """Right-continuous piecewise-constant CDF.

    ``F(y) = levels[j]`` for ``breakpoints[j] <= y < breakpoints[j+1]`` and
    ``F(y) = 0`` left of the first breakpoint. The last level is exactly 1.
    """

    breakpoints: np.ndarray
    levels: np.ndarray

    def __init__(self, breakpoints: Iterable[float], levels: Iterable[float]):
        y = np.asarray(breakpoints, dtype=float).ravel()
        p = np.asarray(levels, dtype=float).ravel()
        if y.size == 0 or y.size != p.size:
            raise ValueError("breakpoints and levels must be non-empty and of equal length")
        if not np.all(np.isfinite(y)):
            raise ValueError("breakpoints must be finite")
        if np.any(np.diff(y) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(np.diff(p) < 0):
            raise ValueError("levels must be nondecreasing")
        if p[0] <= 0.0 or p[-1] != 1.0:
            raise ValueError("levels must lie in (0, 1] and end exactly at 1")
        object.__setattr__(self, "breakpoints", _frozen(y))
        object.__setattr__(self, "levels", _frozen(p))

    @classmethod
    def from_sample(cls, sample: SampleBatch | Iterable[float]) -> "StepCdf":
        """Empirical CDF; tied values collapse onto one breakpoint."""
        if not isinstance(sample, SampleBatch):
            sample = SampleBatch(sample)
        z = sample.sorted
        n = z.size
        # index of the last copy of each distinct value
        last = np.flatnonzero(np.append(z[1:] != z[:-1], True))
        levels = (last + 1) / n
        levels[-1] = 1.0
        return cls(z[last], levels)

    @classmethod
    def from_pieces(cls, points: Iterable[float], levels: Iterable[float]) -> "StepCdf":
        """Canonical form of a step CDF given on a (possibly redundant) grid.

        Zero levels are dropped, plateaus are merged, and any level that
        rounds to within 1e-15 of one at the end is forced to exactly 1.
        """
        y = np.asarray(points, dtype=float)
        p = np.clip(np.asarray(levels, dtype=float), 0.0, 1.0)
        order = np.argsort(y, kind="stable")
        y, p = y[order], p[order]
        # duplicated points: keep the largest level (right-continuity)
        keep = np.append(y[1:] != y[:-1], True)
        y, p = y[keep], np.maximum.accumulate(p)[keep]
        if p[-1] < 1.0 - 1e-15:
            raise ValueError("pieces never reach level 1")
        p[-1] = 1.0
        rise = np.concatenate(([p[0] > 0.0], np.diff(p) > 0.0))
        return cls(y[rise], p[rise])

    @property
    def masses(self) -> np.ndarray:
        return np.diff(self.levels, prepend=0.0)

    def __call__(self, y):
        idx = np.searchsorted(self.breakpoints, y, side="right")
        out = np.where(idx > 0, self.levels[np.maximum(idx - 1, 0)], 0.0)
        return float(out) if np.ndim(out) == 0 else out

    def left_limit(self, y):
        idx = np.searchsorted(self.breakpoints, y, side="left")
        out = np.where(idx > 0, self.levels[np.maximum(idx - 1, 0)], 0.0)
        return float(out) if np.ndim(out) == 0 else out

    def __len__(self) -> int:
        return int(self.breakpoints.size)

    def __repr__(self) -> str:
        return (f"StepCdf(k={len(self)}, support=[{self.breakpoints[0]:g}, "
                f"{self.breakpoints[-1]:g}])")


def var_of_cdf(cdf: StepCdf, alpha: TailLevel) -> float:
    """``inf{y : F(y) > 1 - alpha}``; a level sitting on a plateau moves to the next jump."""
    alpha = check_level(alpha)
    j = int(np.searchsorted(cdf.levels, 1.0 - alpha, side="right"))
    return float(cdf.breakpoints[min(j, len(cdf) - 1)])


def _tail_weights(cdf: StepCdf, alpha: float) -> np.ndarray:
    # portion of each atom lying in the top-alpha tail of the distribution
    above = 1.0 - cdf.levels
    return np.clip(alpha - above, 0.0, cdf.masses)


def cvar_of_cdf(cdf: StepCdf, alpha: TailLevel) -> float:
    """``(1/alpha) * integral_{1-alpha}^1 Q(v) dv`` evaluated as an exact finite sum."""
    alpha = check_level(alpha)
    w = _tail_weights(cdf, alpha)
    return float(np.dot(w, cdf.breakpoints) / alpha)


def mean_of_cdf(cdf: StepCdf) -> float:
    return float(np.dot(cdf.masses, cdf.breakpoints))


def cvar_inf_form(batch: SampleBatch, alpha: TailLevel) -> float:
    """Rockafellar-Uryasev estimator: minimise ``w + mean((X - w)^+) / alpha`` over sample points."""
    alpha = check_level(alpha)
    z = batch.sorted
    n = z.size
    # suffix[i] = sum_{j >= i} z_j ; at w = z_i the positive part covers j > i
    suffix = np.concatenate((np.cumsum(z[::-1])[::-1], [0.0]))
    count_above = n - 1 - np.arange(n)
    excess = suffix[1:] - count_above * z
    objective = z + excess / (n * alpha)
    return float(objective.min())


def cvar_sorted_form(batch: SampleBatch, alpha: TailLevel) -> float:
    """Order-statistic form ``Z_n - (1/alpha) sum_i (Z_{i+1} - Z_i) (i/n - (1 - alpha))^+``."""
    alpha = check_level(alpha)
    z = batch.sorted
    n = z.size
    i = np.arange(1, n)
    weights = np.maximum(i / n - (1.0 - alpha), 0.0)
    return float(z[-1] - np.dot(np.diff(z), weights) / alpha)


def cvar_function(cdf: StepCdf) -> Callable[[float], float]:
    """``alpha -> cvar_of_cdf(cdf, alpha)``, the callable shape the bound routines consume."""
    return lambda alpha: cvar_of_cdf(cdf, alpha)
