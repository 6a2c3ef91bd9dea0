#!/usr/bin/env python3
"""Plot an `rpforest run` report: missing rate and distance discrepancy
against tree count, one line per nTry, with one-standard-error bars.

    python3 scripts/plot_sweep.py sweep.csv -o sweep.png
    python3 scripts/plot_sweep.py sweep.json --check   # validate only

Reads the CSV or JSON report exactly as the CLI writes it.
"""

import argparse
import json
import sys

import pandas as pd

REQUIRED = ["dataset", "trees", "n_try", "kind", "runs",
            "missing_rate", "missing_rate_sd", "discrepancy", "discrepancy_sd"]


def load(path):
    if path.endswith(".json"):
        with open(path) as f:
            doc = json.load(f)
        if doc.get("schema") != "rpforest-report":
            raise ValueError(f"{path}: not an rpforest report")
        return pd.DataFrame(doc["rows"], columns=doc["columns"])
    return pd.read_csv(path)


def mean_rows(df):
    missing = [c for c in REQUIRED if c not in df.columns]
    if missing:
        raise ValueError(f"report lacks columns {missing}")
    means = df[df["kind"] == "mean"].copy()
    if means.empty:
        raise ValueError("report has no mean rows")
    if means["missing_rate"].isna().all():
        raise ValueError("report has no accuracy metrics (timing-only run?)")
    return means.sort_values(["n_try", "trees"])


def plot(means, out):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    panels = [("missing_rate", "missing rate"), ("discrepancy", "normalized kNN distance gap")]
    for ax, (col, label) in zip(axes, panels):
        for n_try, g in means.groupby("n_try"):
            se = g[f"{col}_sd"].fillna(0) / g["runs"] ** 0.5
            ax.errorbar(g["trees"], g[col], yerr=se, marker="o", capsize=3, label=f"nTry={n_try}")
        ax.set_xlabel("trees")
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
        ax.legend()
    fig.suptitle(", ".join(sorted(means["dataset"].astype(str).unique())))
    fig.tight_layout()
    fig.savefig(out, dpi=120)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("report")
    ap.add_argument("-o", "--out", default="sweep.png")
    ap.add_argument("--check", action="store_true", help="validate the report and exit")
    args = ap.parse_args(argv)
    try:
        means = mean_rows(load(args.report))
    except (OSError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    cells = len(means)
    if args.check:
        print(f"ok: {cells} mean rows, trees {sorted(means['trees'].unique().tolist())}")
        return 0
    plot(means, args.out)
    print(f"wrote {args.out} ({cells} cells)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
