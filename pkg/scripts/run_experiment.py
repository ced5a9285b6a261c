#!/usr/bin/env python3
"""Run one experiment from its config in scripts/configs and write results/<name>.csv.

    python3 scripts/run_experiment.py coincidence
    python3 scripts/run_experiment.py surrogate_convergence --workers 4
"""

import argparse
import sys
from pathlib import Path

from cvarbounds.cli import main
from cvarbounds.experiments import EXPERIMENTS

HERE = Path(__file__).resolve().parent


def parse():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("name", choices=EXPERIMENTS + ("all",))
    p.add_argument("--out-dir", default=str(HERE.parent / "results"))
    p.add_argument("--workers", type=int, default=1)
    return p.parse_args()


def run_one(name, out_dir, workers):
    argv = ["experiment", name, "--config", str(HERE / "configs" / f"{name}.json"),
            "--out", str(Path(out_dir) / f"{name}.csv")]
    if name != "timing":
        argv += ["--workers", str(workers)]
    return main(argv)


if __name__ == "__main__":
    args = parse()
    names = EXPERIMENTS if args.name == "all" else (args.name,)
    sys.exit(max(run_one(n, args.out_dir, args.workers) for n in names))
