#!/usr/bin/env python3
"""Plot aggregate.csv files produced by `fedsim run`.

Usage:
    python3 scripts/plot.py out/experiment-a out/experiment-b --metric loss_gap
    python3 scripts/plot.py out/* --metric grad_norm_sq --log --save curves.png

Each argument is a directory containing an aggregate.csv; the curve label is
the directory name. Shaded bands show +/- one standard deviation across seeds.
"""

import argparse
import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

METRICS = {"loss_gap", "grad_norm_sq", "err_norm_sq", "test_acc"}


def load(directory, metric):
    path = os.path.join(directory, "aggregate.csv")
    rounds, mean, std = [], [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            m = row[f"{metric}_mean"]
            if m == "":
                continue
            rounds.append(int(row["round"]))
            mean.append(float(m))
            std.append(float(row[f"{metric}_std"] or 0.0))
    return rounds, mean, std


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("dirs", nargs="+", help="experiment output directories")
    ap.add_argument("--metric", default="loss_gap", choices=sorted(METRICS))
    ap.add_argument("--log", action="store_true", help="log-scale the y axis")
    ap.add_argument("--save", default=None, help="output image path (default <metric>.png)")
    args = ap.parse_args()

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for d in args.dirs:
        try:
            rounds, mean, std = load(d, args.metric)
        except (FileNotFoundError, KeyError) as e:
            print(f"skipping {d}: {e}", file=sys.stderr)
            continue
        label = os.path.basename(os.path.normpath(d))
        ax.plot(rounds, mean, label=label, linewidth=1.4)
        lo = [m - s for m, s in zip(mean, std)]
        hi = [m + s for m, s in zip(mean, std)]
        ax.fill_between(rounds, lo, hi, alpha=0.18)
    ax.set_xlabel("communication round")
    ax.set_ylabel(args.metric)
    if args.log:
        ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    out = args.save or f"{args.metric}.png"
    fig.savefig(out, dpi=150)
    print(out)


if __name__ == "__main__":
    main()
