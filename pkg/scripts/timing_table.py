#!/usr/bin/env python3
"""Summarise results/timing.csv into the per-n median ratios quoted in the README."""

import csv
import statistics
import sys
from collections import defaultdict
from pathlib import Path

path = Path(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "results" / "timing.csv")
ratios = defaultdict(list)
for row in csv.DictReader(path.open()):
    if row["ratio"]:
        ratios[(int(row["n"]), row["bound_kind"])].append(float(row["ratio"]))

print("| n | sampling ratio (median) | end-to-end ratio (median) |")
print("|---|---|---|")
for n in sorted({k[0] for k in ratios}):
    s = statistics.median(ratios[(n, "sampling_ratio")])
    e = statistics.median(ratios[(n, "pipeline_ratio")])
    print(f"| {n} | {s:.2f} | {e:.2f} |")
allS = [v for (n, k), vs in ratios.items() if k == "sampling_ratio" for v in vs]
allE = [v for (n, k), vs in ratios.items() if k == "pipeline_ratio" for v in vs]
print(f"| all | {statistics.mean(allS):.2f} (mean) | {statistics.mean(allE):.2f} (mean) |")
