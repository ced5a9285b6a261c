"""``cvarbounds`` command line.

Subcommands print one JSON document to stdout. Validation problems exit with
status 2 and a JSON object ``{"error": ..., "message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import distributions as dist
from .bounds import SupportBounds, merge_reports, uniform_lower_bound, uniform_upper_bound
from .concentration import (DiscrepancyBudget, brown_deviation_bounds, dkw_epsilon,
                            ecdf_cvar_bounds, order_stat_lower_bound, order_stat_upper_bound,
                            surrogate_cvar_bounds)
from .experiments import EXPERIMENTS, ExperimentConfig, run, summarize, write_results
from .riskcore import (SampleBatch, StepCdf, check_level, cvar_function, cvar_sorted_form,
                       mean_of_cdf)


class UsageError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError("bad_arguments", message)


def _finite_or_inf(x, default):
    return default if x is None else float(x)


def _read_samples(path: str) -> SampleBatch:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError("unreadable_samples", str(exc)) from exc
    vals = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            vals.append(float(line.split(",")[0]))
        except ValueError as exc:
            raise UsageError("bad_samples", f"line {lineno}: {line!r} is not a number") from exc
    return SampleBatch(vals)


def _read_dists(path: str) -> list:
    try:
        return dist.load_specs(path)
    except OSError as exc:
        raise UsageError("unreadable_distribution", str(exc)) from exc
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise UsageError("bad_distribution", f"{type(exc).__name__}: {exc}") from exc


def _supports(args) -> SupportBounds:
    b_default = args.b_truncation if args.b_truncation is not None else math.inf
    a_default = args.a_truncation if args.a_truncation is not None else -math.inf
    return SupportBounds(
        a_x=_finite_or_inf(args.a_x, a_default), b_x=_finite_or_inf(args.b_x, b_default),
        a_y=_finite_or_inf(args.a_y, a_default), b_y=_finite_or_inf(args.b_y, b_default))


def _cmd_bound(args) -> dict:
    if args.eps is None:
        raise UsageError("missing_eps", "bound needs --eps")
    check_level(args.alpha)
    supports = _supports(args)
    if args.samples:
        cdf = StepCdf.from_sample(_read_samples(args.samples))
        cvar_y, mean_y = cvar_function(cdf), mean_of_cdf(cdf)
        source = {"samples": args.samples}
    elif args.dist:
        spec = _read_dists(args.dist)[0]
        cvar_y = lambda lvl: dist.true_cvar(spec, lvl, args.nodes)  # noqa: E731
        mean_y = dist.mean(spec)
        if args.a_y is None and math.isfinite(spec.a):
            supports = SupportBounds(supports.a_x, supports.b_x, spec.a, supports.b_y)
        if args.b_y is None and math.isfinite(spec.b):
            supports = SupportBounds(supports.a_x, supports.b_x, supports.a_y, spec.b)
        source = {"distribution": spec.to_json()}
    else:
        raise UsageError("missing_input", "bound needs --samples or --dist for Y")

    out = {"source": source}
    try:
        up = uniform_upper_bound(cvar_y, args.alpha, args.eps, supports)
    except ValueError as exc:
        up = None
        out.setdefault("absent", {})["upper"] = str(exc)
    try:
        lo = uniform_lower_bound(cvar_y, mean_y, args.alpha, args.eps, supports)
    except ValueError as exc:
        lo = None
        out.setdefault("absent", {})["lower"] = str(exc)
    if up is None and lo is None:
        raise UsageError("no_bound", "; ".join(out["absent"].values()))
    if up is not None and lo is not None:
        rep = merge_reports(up, lo)
    else:
        rep = up or lo
    out.update(rep.as_dict() | {"absent": {**rep.absent, **out.get("absent", {})}})
    return out


def _cmd_concentration(args) -> dict:
    if args.samples:
        batch = _read_samples(args.samples)
    elif args.dist:
        if args.n is None:
            raise UsageError("missing_n", "--dist needs --n to draw a sample")
        batch = dist.sample(_read_dists(args.dist)[0], args.n[0], args.seed)
    else:
        raise UsageError("missing_input", "concentration needs --samples or --dist")
    check_level(args.alpha)
    supports = _supports(args)

    if args.eps is not None:
        rep = surrogate_cvar_bounds(batch, args.alpha, DiscrepancyBudget(args.delta, batch.n, args.eps),
                                    supports)
        return {"kind": "surrogate", **rep.as_dict(), "estimate": cvar_sorted_form(batch, args.alpha)}

    # a single variable: whichever of the x/y flags was given is its support
    a = next((v for v in (args.a_x, args.a_y, args.a_truncation) if v is not None), -math.inf)
    b = next((v for v in (args.b_x, args.b_y, args.b_truncation) if v is not None), math.inf)
    supports = SupportBounds.common(a, b)
    rep = ecdf_cvar_bounds(batch, args.alpha, args.delta, supports)
    out = {"kind": "ecdf", **rep.as_dict(), "estimate": cvar_sorted_form(batch, args.alpha),
           "dkw_epsilon": dkw_epsilon(args.delta, batch.n)}
    a, b = supports.a_min, supports.b_max
    if args.delta <= 0.5:
        os = {}
        if math.isfinite(b):
            os["upper"] = order_stat_upper_bound(batch, args.alpha, args.delta, b)
        if math.isfinite(a):
            os["lower"] = order_stat_lower_bound(batch, args.alpha, args.delta, a)
        out["order_statistic"] = os
    if math.isfinite(a) and math.isfinite(b) and a < b:
        r_up, r_down = brown_deviation_bounds(args.alpha, args.delta, batch.n, a, b)
        out["brown_radii"] = {"up": r_up, "down": r_down}
    return out


def _cmd_discrepancy(args) -> dict:
    if not args.dist:
        raise UsageError("missing_input", "discrepancy needs --dist with two distributions")
    specs = _read_dists(args.dist)
    if len(specs) == 1 and specs[0].kind == "truncated_gmm":
        specs.append(dist.moment_matched_normal(specs[0]))
    if len(specs) != 2:
        raise UsageError("bad_distribution", "discrepancy needs exactly two distributions")
    x, y = specs
    lo = args.lo if args.lo is not None else min(x.a, y.a)
    hi = args.hi if args.hi is not None else max(x.b, y.b)
    if args.b_truncation is not None and not math.isfinite(hi):
        hi = args.b_truncation
    if args.a_truncation is not None and not math.isfinite(lo):
        lo = args.a_truncation
    eps = dist.binned_discrepancy(x, y, args.bins, lo, hi,
                                  n_samples=args.n[0] if args.n else None, seed=args.seed)
    return {"eps": eps, "bins": args.bins, "lo": lo, "hi": hi,
            "distributions": [x.to_json(), y.to_json()]}


def _cmd_experiment(args) -> dict:
    base = {}
    if args.config:
        try:
            base = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError("bad_config", str(exc)) from exc
    base["experiment"] = args.name
    overrides = {"alpha": args.alpha_opt, "delta": args.delta_opt, "repetitions": args.reps,
                 "master_seed": args.seed_opt, "bins": args.bins_opt, "eps_model": args.eps,
                 "b_truncation": args.b_truncation, "a_truncation": args.a_truncation,
                 "workers": args.workers, "output_path": args.out,
                 "n_grid": args.n, "timing_inner": args.timing_inner}
    base.update({k: v for k, v in overrides.items() if v is not None})
    if args.dist:
        base["distributions"] = [s.to_json() for s in _read_dists(args.dist)]
    try:
        config = ExperimentConfig.from_json(base)
    except TypeError as exc:
        raise UsageError("bad_config", str(exc)) from exc
    started = time.time()
    rows = run(config)
    out = {"experiment": config.experiment, "rows": len(rows)}
    if config.output_path:
        manifest = write_results(config, rows, config.output_path, started=started)
        out["summary"] = manifest["summary"]
        out["output_path"] = config.output_path
    else:
        out["summary"] = summarize(config, rows)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cvarbounds", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, alpha_dest="alpha", delta_dest="delta", seed_dest="seed", bins_dest="bins",
               defaults=True):
        sp.add_argument("--alpha", dest=alpha_dest, type=float, default=0.2 if defaults else None)
        sp.add_argument("--delta", dest=delta_dest, type=float, default=0.05 if defaults else None)
        sp.add_argument("--eps", type=float, default=None,
                        help="CDF discrepancy; for concentration, the X/Y model discrepancy")
        sp.add_argument("--n", type=int, action="append", default=None,
                        help="sample size (repeat for an experiment grid)")
        sp.add_argument("--seed", dest=seed_dest, type=int, default=0 if defaults else None)
        sp.add_argument("--dist", help="JSON file with one or more distribution specs")
        sp.add_argument("--bins", dest=bins_dest, type=int, default=10_000 if defaults else None)
        sp.add_argument("--b-truncation", type=float, default=None,
                        help="upper support to use when the distribution is unbounded above")
        sp.add_argument("--a-truncation", type=float, default=None)
        sp.add_argument("--out", default=None)

    def supports(sp):
        for name in ("a-x", "b-x", "a-y", "b-y"):
            sp.add_argument(f"--{name}", type=float, default=None)
        sp.add_argument("--samples", help="file with one real per line")

    b = sub.add_parser("bound", help="uniform-discrepancy sandwich for CVaR of X from Y")
    common(b)
    supports(b)
    b.add_argument("--nodes", type=int, default=100_001, help="quadrature nodes for analytic Y")

    c = sub.add_parser("concentration", help="confidence bounds from a sample")
    common(c)
    supports(c)

    d = sub.add_parser("discrepancy", help="binned sup-distance between two CDFs")
    common(d)
    d.add_argument("--lo", type=float, default=None)
    d.add_argument("--hi", type=float, default=None)

    e = sub.add_parser("experiment", help="run one experiment grid")
    e.add_argument("name", choices=EXPERIMENTS)
    common(e, alpha_dest="alpha_opt", delta_dest="delta_opt", seed_dest="seed_opt",
           bins_dest="bins_opt", defaults=False)
    e.add_argument("--reps", type=int, default=None)
    e.add_argument("--config", default=None, help="JSON ExperimentConfig; flags override it")
    e.add_argument("--workers", type=int, default=None)
    e.add_argument("--timing-inner", type=int, default=None)
    return p


_COMMANDS = {"bound": _cmd_bound, "concentration": _cmd_concentration,
             "discrepancy": _cmd_discrepancy, "experiment": _cmd_experiment}


def _fail(code: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": code, "message": message}) + "\n")
    return 2


def _jsonable(o):
    if isinstance(o, float) and not math.isfinite(o):
        return None
    if isinstance(o, dict):
        return {k: _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.generic):
        return o.item()
    return o


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        result = _COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail(exc.code, str(exc))
    except ValueError as exc:
        return _fail("invalid_input", str(exc))
    sys.stdout.write(json.dumps(_jsonable(result), indent=2) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
