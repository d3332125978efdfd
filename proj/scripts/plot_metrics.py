#!/usr/bin/env python3
"""Plot accuracy curves from arrcl result cells.

usage: plot_metrics.py RESULT_DIR [--metric accuracy_fixed] [--out plot.png]
"""
import argparse
import csv
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("result_dir", type=pathlib.Path)
    ap.add_argument("--metric", default="accuracy_fixed")
    ap.add_argument("--out", type=pathlib.Path, default=pathlib.Path("metrics.png"))
    args = ap.parse_args()

    fig, ax = plt.subplots(figsize=(7, 4))
    for cell in sorted(p for p in args.result_dir.iterdir() if (p / "metrics.csv").exists()):
        xs, ys = [], []
        with open(cell / "metrics.csv", newline="") as f:
            for row in csv.DictReader(f):
                if row["metric"] == args.metric:
                    xs.append(int(row["experience"]))
                    ys.append(float(row["value"]))
        ax.plot(xs, ys, marker="o", label=cell.name)
    ax.set_xlabel("experience")
    ax.set_ylabel(args.metric)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)


if __name__ == "__main__":
    main()
