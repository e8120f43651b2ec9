#!/usr/bin/env python3
"""Plots from campaign output directories.

    python3 scripts/plot.py results/consistency
    python3 scripts/plot.py results/normality

Needs pandas and matplotlib.
"""
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd


def consistency(d: Path, s: pd.DataFrame) -> None:
    fig, ax = plt.subplots()
    for method, g in s.groupby("method", sort=False):
        ax.loglog(g["n"], g["mse"], "o-", label=method)
    for col, style in [("crb_paper", "--"), ("crb_independent", ":")]:
        if col in s and s[col].notna().any():
            ax.loglog(s["n"], s[col], style, label=col)
    ax.set_xlabel("N")
    ax.set_ylabel("MSE")
    ax.legend()
    fig.savefig(d / "mse.png", dpi=120)


def normality(d: Path, runs: pd.DataFrame) -> None:
    cell = runs["cell"].max()
    r = runs[(runs["cell"] == cell) & (runs["status"] == "ok")]
    x = np.sqrt(r["n"]) * (r["theta_hat"] - r["theta0"])
    fig, ax = plt.subplots()
    ax.hist(x, bins=40, density=True)
    sd = x.std()
    t = np.linspace(x.min(), x.max(), 200)
    ax.plot(t, np.exp(-0.5 * ((t - x.mean()) / sd) ** 2) / (sd * np.sqrt(2 * np.pi)))
    ax.set_xlabel("sqrt(N) (theta_hat - theta0)")
    fig.savefig(d / "hist.png", dpi=120)


def main() -> None:
    d = Path(sys.argv[1] if len(sys.argv) > 1 else "results/consistency")
    s = pd.read_csv(d / "summary.csv")
    if "mse" not in s:
        print(s.to_string(index=False))
        return
    consistency(d, s)
    runs = d / "runs.csv"
    if runs.exists():
        normality(d, pd.read_csv(runs))


if __name__ == "__main__":
    main()
