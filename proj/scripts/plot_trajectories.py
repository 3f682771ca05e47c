#!/usr/bin/env python3
"""Plot cost and true-output violation from ofo-trajectory/1 CSV files.

usage: plot_trajectories.py OUT_DIR [--save FILE]
"""
import argparse
import csv
import pathlib
import sys

SCHEMA = "# schema: ofo-trajectory/1"


def read_trajectory(path):
    with open(path, newline="") as f:
        first = f.readline().rstrip("\n")
        if first != SCHEMA:
            raise ValueError(f"{path}: expected '{SCHEMA}', found '{first}'")
        rows = [line for line in f if not line.startswith("#")]
    reader = csv.DictReader(rows)
    k, cost, violation = [], [], []
    for row in reader:
        k.append(int(row["k"]))
        cost.append(float(row["cost"]))
        violation.append(float(row["violation"]))
    return k, cost, violation


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out_dir", type=pathlib.Path)
    parser.add_argument("--save", type=pathlib.Path, help="write the figure instead of showing it")
    args = parser.parse_args()

    import matplotlib

    if args.save:
        matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    files = sorted(p for p in args.out_dir.glob("*.csv") if not p.name.endswith("_ledger.csv"))
    if not files:
        sys.exit(f"no trajectory CSV files in {args.out_dir}")
    fig, (ax_cost, ax_viol) = plt.subplots(2, 1, sharex=True, figsize=(7, 6))
    for path in files:
        k, cost, violation = read_trajectory(path)
        ax_cost.plot(k, cost, label=path.stem)
        ax_viol.plot(k, violation, label=path.stem)
    ax_cost.set_ylabel("cost")
    ax_viol.set_ylabel("max violation (true output)")
    ax_viol.set_xlabel("iteration k")
    ax_viol.set_yscale("symlog", linthresh=1e-4)
    ax_cost.legend()
    fig.tight_layout()
    if args.save:
        fig.savefig(args.save, dpi=150)
    else:
        plt.show()


if __name__ == "__main__":
    main()
