#!/usr/bin/env python3
"""Collect per-scenario CSVs written by run_experiments.sh into one table.

Rows are keyed by (scenario, bucket); seeds are averaged and the seed
count reported, so partially finished grids still summarize cleanly.
"""

import csv
import glob
import os
import sys


def main(root: str) -> int:
    acc = {}
    for path in sorted(glob.glob(os.path.join(root, "*", "seed*", "*.csv"))):
        scenario = os.path.basename(os.path.dirname(os.path.dirname(path)))
        with open(path, newline="") as f:
            for row in csv.DictReader(f):
                key = (scenario, row["bucket"])
                acc.setdefault(key, []).append(float(row["mean_nmae"]))
    if not acc:
        print(f"no scenario CSVs under {root}", file=sys.stderr)
        return 1
    writer = csv.writer(sys.stdout)
    writer.writerow(["scenario", "bucket", "mean_nmae", "n_seeds"])
    for (scenario, bucket), vals in sorted(acc.items()):
        writer.writerow([scenario, bucket, f"{sum(vals) / len(vals):.4f}", len(vals)])
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1] if len(sys.argv) > 1 else "runs"))
