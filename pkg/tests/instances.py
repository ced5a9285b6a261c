"""Random admissible (X, Y, eps, supports) instances for the sandwich checks."""

import numpy as np

from cvarbounds.bounds import SupportBounds
from cvarbounds.riskcore import StepCdf


def random_y(rng, k=None):
    k = k or int(rng.integers(1, 8))
    pts = np.unique(rng.integers(0, 20, size=k).astype(float) / 2)
    w = rng.dirichlet(np.ones(pts.size))
    lev = np.cumsum(w)
    lev[-1] = 1.0
    return StepCdf.from_pieces(pts, lev)


def upper_instance(rng):
    """Y, eps, supports and an X with F_Y - F_X <= eps on the real line."""
    f_y = random_y(rng)
    y = f_y.breakpoints
    eps = float(rng.choice([0.0, rng.uniform(0, 0.6), rng.uniform(0, 0.99)]))
    b_y = y[-1] + float(rng.choice([0.0, rng.uniform(0, 2)]))
    a_y = y[0] - float(rng.uniform(0, 1))
    # about half the instances have a_x <= a_y and b_x >= b_y, where the closed form is tight
    if rng.random() < 0.5:
        a_x = a_y - float(rng.uniform(0, 1))
        b_x = b_y + float(rng.uniform(0, 2))
    else:
        # a_x may sit above a_y only while F_Y stays below eps
        cands = [y[0] - rng.uniform(0, 2)] + [t for t in y if f_y.left_limit(t) <= eps]
        a_x = float(rng.choice(cands))
        b_x = max(y[-1] + float(rng.uniform(-3, 3)), a_x)
    # smallest admissible F_X is 1 at b_x: needs F_Y(z) - eps <= F_X everywhere
    grid = np.unique(np.concatenate((y[(y >= a_x) & (y <= b_x)], rng.uniform(a_x, b_x, 4), [a_x, b_x])))
    floor = np.clip(f_y(grid) - eps, 0, 1)
    lev = np.maximum.accumulate(np.maximum(floor, rng.uniform(0, 1, grid.size) * rng.integers(0, 2, grid.size)))
    lev[-1] = 1.0
    f_x = StepCdf.from_pieces(grid, lev)
    return f_y, eps, SupportBounds(a_x, b_x, a_y, b_y), f_x


def lower_instance(rng):
    """Y, eps, supports and an X with F_X - F_Y <= eps on the real line."""
    f_y = random_y(rng)
    y = f_y.breakpoints
    eps = float(rng.choice([0.0, rng.uniform(0, 0.6), rng.uniform(0, 0.99)]))
    a_y = y[0] - float(rng.choice([0.0, rng.uniform(0, 2)]))
    a_x = a_y - float(rng.uniform(-1, 2))
    # b_x must be where F_Y has reached 1 - eps
    reach = [t for t in y if f_y(t) >= 1 - eps]
    b_x = float(reach[0]) + float(rng.uniform(0, 2))
    a_x = min(a_x, b_x)
    grid = np.unique(np.concatenate((y[(y >= a_x) & (y <= b_x)], rng.uniform(a_x, b_x, 4), [a_x, b_x])))
    cap = np.minimum(f_y(grid) + eps, 1.0)
    lev = np.minimum(cap, rng.uniform(0, 1, grid.size))
    lev = np.minimum.accumulate(lev[::-1])[::-1]
    lev[-1] = 1.0
    f_x = StepCdf.from_pieces(grid, lev)
    return f_y, eps, SupportBounds(a_x, b_x, a_y, float(y[-1] + rng.uniform(0, 1))), f_x


def check_upper_admissible(f_y, f_x, eps, supports, tol=1e-12):
    z = np.union1d(f_y.breakpoints, f_x.breakpoints)
    assert np.all(f_y(z) - f_x(z) <= eps + tol)
    assert f_x.breakpoints[0] >= supports.a_x and f_x.breakpoints[-1] <= supports.b_x


def check_lower_admissible(f_y, f_x, eps, supports, tol=1e-12):
    z = np.union1d(f_y.breakpoints, f_x.breakpoints)
    assert np.all(f_x(z) - f_y(z) <= eps + tol)
    assert f_x.breakpoints[0] >= supports.a_x and f_x.breakpoints[-1] <= supports.b_x
