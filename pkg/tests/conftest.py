import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=150, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=400, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def quantile_integral_oracle(cdf, alpha, nodes=1_000_000):
    """(1/alpha) * integral of the weak inverse over [1-alpha, 1] by a midpoint rule."""
    v = 1.0 - alpha + (np.arange(nodes) + 0.5) * (alpha / nodes)
    idx = np.searchsorted(cdf.levels, v, side="left")
    return float(cdf.breakpoints[np.minimum(idx, len(cdf) - 1)].mean())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance(request, capsys):
    """Record one PASS/FAIL line per criterion; call with (number, passed, detail)."""

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"
        request.config._acceptance_lines.append(line)
        with capsys.disabled():
            print(f"\n    {line}")
        return passed

    return record
