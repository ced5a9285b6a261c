"""Experiment drivers: surrogate bounding, timing, bound coincidence, coverage.

Every experiment is a grid of independent cells ``(distribution, n, repetition)``.
A cell's randomness comes only from its derived seed, which is written to
each row, so any row can be replayed in isolation with :func:`run_cell`.
Rows are sorted canonically before they are returned, whatever order the
workers finished in.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import platform
import statistics
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np

from . import distributions as dist
from .bounds import SupportBounds
from .concentration import (DiscrepancyBudget, dkw_epsilon, ecdf_cvar_bounds,
                            order_stat_lower_bound, order_stat_upper_bound,
                            surrogate_cvar_bounds)
from .distributions import DistributionSpec
from .riskcore import cvar_sorted_form

__all__ = [
    "EXPERIMENTS",
    "ExperimentConfig",
    "ResultRow",
    "derive_seed",
    "run",
    "run_cell",
    "run_surrogate_convergence",
    "run_timing",
    "run_coincidence",
    "run_coverage",
    "coverage_summary",
    "coincidence_summary",
    "write_results",
    "SCHEMA_VERSION",
]

SCHEMA_VERSION = "1"
EXPERIMENTS = ("surrogate_convergence", "timing", "coincidence", "coverage")
_TAGS = {name: i + 1 for i, name in enumerate(EXPERIMENTS)}

# distributions the order-statistic comparison was run on
COINCIDENCE_DISTRIBUTIONS = (
    dist.beta(2, 2), dist.beta(0.5, 0.5), dist.beta(2, 5), dist.beta(5, 2),
    dist.beta(10, 2), dist.beta(2, 10), dist.laplace(0.0, 1.0),
)


def _default_distributions(experiment: str) -> tuple:
    if experiment in ("surrogate_convergence", "timing"):
        gmm = dist.five_component_gmm()
        return (gmm, dist.moment_matched_normal(gmm))
    if experiment == "coincidence":
        return COINCIDENCE_DISTRIBUTIONS
    return (dist.truncated_normal(0.0, 0.09, -1.0, 1.0),)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    alpha: float = 0.2
    delta: float = 0.05
    n_grid: tuple = (100, 1000, 10_000)
    repetitions: int = 100
    master_seed: int = 0
    distributions: tuple = ()
    output_path: Optional[str] = None
    bins: int = 10_000
    eps_model: Optional[float] = None
    a_truncation: Optional[float] = None
    b_truncation: Optional[float] = None
    true_cvar_nodes: int = 1_000_001
    timing_inner: int = 30
    workers: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError("alpha must lie in (0, 1]")
        hi = 0.5 if self.experiment == "coincidence" else 1.0
        if not (0.0 < self.delta < hi or (hi == 0.5 and self.delta == 0.5)):
            raise ValueError(f"delta must lie in (0, {hi:g}{']' if hi == 0.5 else ')'} "
                             f"for the {self.experiment} experiment")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        grid = tuple(int(n) for n in self.n_grid)
        if not grid or min(grid) < 1:
            raise ValueError("n_grid must be non-empty with every n >= 1")
        object.__setattr__(self, "n_grid", grid)
        if not self.distributions:
            object.__setattr__(self, "distributions", _default_distributions(self.experiment))
        else:
            object.__setattr__(self, "distributions", tuple(self.distributions))
        if self.experiment in ("surrogate_convergence", "timing") and len(self.distributions) != 2:
            raise ValueError(f"{self.experiment} needs exactly [target, surrogate] distributions")
        if self.eps_model is not None and not (0.0 <= self.eps_model <= 1.0):
            raise ValueError("eps_model must lie in [0, 1]")

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["n_grid"] = list(self.n_grid)
        d["distributions"] = [s.to_json() for s in self.distributions]
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        obj = dict(obj)
        if "distributions" in obj:
            obj["distributions"] = tuple(DistributionSpec.from_json(s) for s in obj["distributions"])
        if "n_grid" in obj:
            obj["n_grid"] = tuple(obj["n_grid"])
        return cls(**obj)


@dataclass
class ResultRow:
    experiment: str
    distribution: str
    n: int
    repetition: int
    seed: Optional[int]
    bound_kind: str
    lower: Optional[float] = None
    upper: Optional[float] = None
    estimate: Optional[float] = None
    baseline: Optional[float] = None
    true_value: Optional[float] = None
    gap: Optional[float] = None
    eps: Optional[float] = None
    ratio: Optional[float] = None
    wall_ns: Optional[int] = None
    covered: Optional[bool] = None
    note: str = ""

    def __post_init__(self):
        if self.lower is not None and self.upper is not None and self.lower > self.upper + 1e-12:
            raise ValueError(f"row has lower {self.lower} > upper {self.upper}")


COLUMNS = tuple(f.name for f in dataclasses.fields(ResultRow))


def derive_seed(master_seed: int, experiment: str, dist_index: int, n: int, repetition: int) -> int:
    ss = np.random.SeedSequence([int(master_seed), _TAGS[experiment], dist_index, n, repetition])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def _supports(spec: DistributionSpec, config: ExperimentConfig):
    a = spec.a if math.isfinite(spec.a) else config.a_truncation
    b = spec.b if math.isfinite(spec.b) else config.b_truncation
    return a, b


@lru_cache(maxsize=64)
def _true_cvar(spec: DistributionSpec, alpha: float, nodes: int) -> float:
    return dist.true_cvar(spec, alpha, nodes)


@lru_cache(maxsize=64)
def _discrepancy(x: DistributionSpec, y: DistributionSpec, bins: int) -> float:
    lo = min(x.a, y.a)
    hi = max(x.b, y.b)
    return dist.binned_discrepancy(x, y, bins, lo, hi)


def _eps_model(config: ExperimentConfig) -> float:
    if config.eps_model is not None:
        return config.eps_model
    target, surrogate = config.distributions
    return _discrepancy(target, surrogate, config.bins)


# --------------------------------------------------------------------------
# cells


def _surrogate_cell(config: ExperimentConfig, n: int, rep: int) -> list:
    target, surrogate = config.distributions
    seed = derive_seed(config.master_seed, config.experiment, 0, n, rep)
    eps = _eps_model(config)
    truth = _true_cvar(target, config.alpha, config.true_cvar_nodes)
    supports = SupportBounds(target.a, target.b, surrogate.a, surrogate.b)

    ys = dist.sample(surrogate, n, seed, stream=1)
    report = surrogate_cvar_bounds(ys, config.alpha, DiscrepancyBudget(config.delta, n, eps), supports)
    xs = dist.sample(target, n, seed, stream=0)
    common = dict(experiment=config.experiment, n=n, repetition=rep, seed=seed, true_value=truth)
    lo, up = report.lower, report.upper
    covered = (lo is None or lo <= truth) and (up is None or truth <= up)
    return [
        ResultRow(distribution=surrogate.label, bound_kind="surrogate_bounds", lower=lo, upper=up,
                  eps=report.inputs["eps"], covered=covered,
                  note=";".join(report.case_taken + tuple(report.absent.values())), **common),
        ResultRow(distribution=target.label, bound_kind="target_estimate",
                  estimate=cvar_sorted_form(xs, config.alpha), **common),
    ]


def _median_ns(fn, repeats: int) -> int:
    fn()  # warmup
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        fn()
        samples.append(time.perf_counter_ns() - t0)
    return max(int(statistics.median(samples)), 1)


def _timing_cell(config: ExperimentConfig, n: int, rep: int) -> list:
    target, surrogate = config.distributions
    seed = derive_seed(config.master_seed, config.experiment, 0, n, rep)
    eps = _eps_model(config)
    supports = SupportBounds(target.a, target.b, surrogate.a, surrogate.b)
    budget = DiscrepancyBudget(config.delta, n, eps)
    k = config.timing_inner

    t_x = _median_ns(lambda: dist.sample(target, n, seed, stream=0), k)
    t_y = _median_ns(lambda: dist.sample(surrogate, n, seed, stream=1), k)
    p_x = _median_ns(lambda: cvar_sorted_form(dist.sample(target, n, seed, stream=0), config.alpha), k)
    p_y = _median_ns(lambda: surrogate_cvar_bounds(dist.sample(surrogate, n, seed, stream=1),
                                                   config.alpha, budget, supports), k)
    common = dict(experiment=config.experiment, n=n, repetition=rep, seed=seed)
    return [
        ResultRow(distribution=target.label, bound_kind="sample_target", wall_ns=t_x, **common),
        ResultRow(distribution=surrogate.label, bound_kind="sample_surrogate", wall_ns=t_y, **common),
        ResultRow(distribution=target.label, bound_kind="pipeline_target", wall_ns=p_x, **common),
        ResultRow(distribution=surrogate.label, bound_kind="pipeline_surrogate", wall_ns=p_y, **common),
        ResultRow(distribution="ratio", bound_kind="sampling_ratio", ratio=t_x / t_y, **common),
        ResultRow(distribution="ratio", bound_kind="pipeline_ratio", ratio=p_x / p_y, **common),
    ]


def _coincidence_cell(config: ExperimentConfig, idx: int, n: int, rep: int) -> list:
    spec = config.distributions[idx]
    seed = derive_seed(config.master_seed, config.experiment, idx, n, rep)
    batch = dist.sample(spec, n, seed)
    a, b = _supports(spec, config)
    eps = dkw_epsilon(config.delta, n)
    common = dict(experiment=config.experiment, distribution=spec.label, n=n,
                  repetition=rep, seed=seed, eps=eps)
    rows = []

    if b is None:
        rows.append(ResultRow(bound_kind="upper_pair", note="skipped: unbounded above, pass b_truncation", **common))
    elif b < batch.sorted[-1]:
        rows.append(ResultRow(bound_kind="upper_pair", note=f"skipped: sample maximum exceeds b={b}", **common))
    else:
        ours = ecdf_cvar_bounds(batch, config.alpha, config.delta, SupportBounds.common(-math.inf, b)).upper
        theirs = order_stat_upper_bound(batch, config.alpha, config.delta, b)
        case = "U_main" if config.alpha > eps else "U_degenerate"
        rows.append(ResultRow(bound_kind="upper_pair", upper=ours, baseline=theirs,
                              gap=abs(ours - theirs), note=case, **common))

    if a is None:
        rows.append(ResultRow(bound_kind="lower_pair", note="skipped: unbounded below, pass a_truncation", **common))
    elif a > batch.sorted[0]:
        rows.append(ResultRow(bound_kind="lower_pair", note=f"skipped: sample minimum below a={a}", **common))
    else:
        ours = ecdf_cvar_bounds(batch, config.alpha, config.delta, SupportBounds.common(a, math.inf)).lower
        theirs = order_stat_lower_bound(batch, config.alpha, config.delta, a)
        case = "L_main" if config.alpha + eps < 1.0 else "L_degenerate"
        rows.append(ResultRow(bound_kind="lower_pair", lower=ours, baseline=theirs,
                              gap=abs(ours - theirs), note=case, **common))
    return rows


def _coverage_cell(config: ExperimentConfig, idx: int, n: int, rep: int) -> list:
    spec = config.distributions[idx]
    seed = derive_seed(config.master_seed, config.experiment, idx, n, rep)
    truth = _true_cvar(spec, config.alpha, config.true_cvar_nodes)
    a, b = _supports(spec, config)
    support = SupportBounds.common(-math.inf if a is None else a, math.inf if b is None else b)
    batch = dist.sample(spec, n, seed)
    report = ecdf_cvar_bounds(batch, config.alpha, config.delta, support)
    return [ResultRow(experiment=config.experiment, distribution=spec.label, n=n, repetition=rep,
                      seed=seed, bound_kind="ecdf_bounds", lower=report.lower, upper=report.upper,
                      estimate=cvar_sorted_form(batch, config.alpha), true_value=truth,
                      eps=report.inputs["eps"], covered=report.contains(truth),
                      note=";".join(report.case_taken))]


def run_cell(config: ExperimentConfig, dist_index: int, n: int, repetition: int) -> list:
    """Rows of one grid cell; identical to the matching rows of a full run."""
    if config.experiment == "surrogate_convergence":
        return _surrogate_cell(config, n, repetition)
    if config.experiment == "timing":
        return _timing_cell(config, n, repetition)
    if config.experiment == "coincidence":
        return _coincidence_cell(config, dist_index, n, repetition)
    return _coverage_cell(config, dist_index, n, repetition)


def _cells(config: ExperimentConfig) -> list:
    per_dist = config.experiment in ("coincidence", "coverage")
    dists = range(len(config.distributions)) if per_dist else [0]
    return [(d, n, r) for d in dists for n in config.n_grid for r in range(config.repetitions)]


def _run_cells(config: ExperimentConfig) -> list:
    cells = _cells(config)
    workers = 1 if config.experiment == "timing" else max(1, config.workers)
    if workers == 1:
        chunks = [run_cell(config, *c) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run_cell, [config] * len(cells), *zip(*cells)))
    # canonical order: (n, repetition), then distribution index
    keyed = sorted(zip(cells, chunks), key=lambda t: (t[0][1], t[0][2], t[0][0]))
    return [row for _, chunk in keyed for row in chunk]


def run_surrogate_convergence(config: ExperimentConfig) -> list:
    return _run_cells(_as(config, "surrogate_convergence"))


def run_timing(config: ExperimentConfig) -> list:
    return _run_cells(_as(config, "timing"))


def run_coincidence(config: ExperimentConfig) -> list:
    return _run_cells(_as(config, "coincidence"))


def run_coverage(config: ExperimentConfig) -> list:
    return _run_cells(_as(config, "coverage"))


def _as(config: ExperimentConfig, name: str) -> ExperimentConfig:
    if config.experiment != name:
        raise ValueError(f"config is for {config.experiment!r}, not {name!r}")
    return config


def run(config: ExperimentConfig) -> list:
    return _run_cells(config)


# --------------------------------------------------------------------------
# summaries


def coverage_summary(rows: list) -> dict:
    """Per-side violation frequencies with 95% normal-approximation half-widths."""
    rows = [r for r in rows if r.true_value is not None and (r.lower is not None or r.upper is not None)]
    m = len(rows)
    if m == 0:
        return {"repetitions": 0}
    up = sum(1 for r in rows if r.upper is not None and r.true_value > r.upper)
    lo = sum(1 for r in rows if r.lower is not None and r.true_value < r.lower)
    out = {"repetitions": m}
    for side, k in (("upper", up), ("lower", lo)):
        p = k / m
        out[f"{side}_violations"] = k
        out[f"{side}_violation_rate"] = p
        out[f"{side}_half_width"] = 1.96 * math.sqrt(p * (1 - p) / m)
    out["containment_rate"] = sum(1 for r in rows if r.covered) / m
    return out


def coincidence_summary(rows: list) -> dict:
    out = {}
    for r in rows:
        if r.gap is None:
            continue
        key = f"{r.distribution}|{r.bound_kind}"
        out[key] = max(out.get(key, 0.0), r.gap)
    return out


def timing_summary(rows: list) -> dict:
    out = {}
    for kind in ("sampling_ratio", "pipeline_ratio"):
        vals = [r.ratio for r in rows if r.bound_kind == kind]
        if vals:
            out[f"mean_{kind}"] = float(np.mean(vals))
    return out


def summarize(config: ExperimentConfig, rows: list) -> dict:
    if config.experiment == "coverage":
        return coverage_summary(rows)
    if config.experiment == "coincidence":
        gaps = coincidence_summary(rows)
        return {"max_gap": max(gaps.values(), default=None), "max_gap_by_pair": gaps}
    if config.experiment == "timing":
        return timing_summary(rows)
    s = coverage_summary([r for r in rows if r.bound_kind == "surrogate_bounds"])
    s["eps_model"] = _eps_model(config)
    s["true_cvar"] = _true_cvar(config.distributions[0], config.alpha, config.true_cvar_nodes)
    widths = {}
    for n in config.n_grid:
        w = [r.upper - r.lower for r in rows
             if r.bound_kind == "surrogate_bounds" and r.n == n and r.lower is not None and r.upper is not None]
        if w:
            widths[str(n)] = float(np.mean(w))
    s["mean_width_by_n"] = widths
    return s


# --------------------------------------------------------------------------
# output


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_cell(getattr(r, c)) for c in COLUMNS])
    return buf.getvalue()


def _git_hash() -> Optional[str]:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).resolve().parent, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return None
    return out.stdout.strip() or None


def write_results(config: ExperimentConfig, rows: list, path: str | Path,
                  started: Optional[float] = None) -> dict:
    """Write ``path`` (CSV), ``path.manifest.json`` and ``path.meta.json``.

    The CSV and manifest are deterministic for a given config and code
    version; wall-clock metadata goes to the separate ``.meta.json``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(rows_to_csv(rows))
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "columns": list(COLUMNS),
        "rng": dist.RNG_NAME,
        "git_hash": _git_hash(),
        "config": config.to_json(),
        "row_count": len(rows),
        "summary": summarize(config, rows),
    }
    Path(f"{path}.manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    meta = {
        "finished_unix": time.time(),
        "started_unix": started,
        "python": platform.python_version(),
        "platform": platform.platform(),
        "numpy": np.__version__,
    }
    Path(f"{path}.meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    return manifest
