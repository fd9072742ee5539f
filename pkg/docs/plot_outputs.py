"""Render l2ereg CLI outputs as PNG figures (documentation helper).

Needs matplotlib, which the package itself does not depend on.

    python docs/plot_outputs.py benchmark OUT/benchmark.csv bench.png
    python docs/plot_outputs.py path OUT/path.csv path.png
    python docs/plot_outputs.py fit DATA/dataset.csv OUT/fit.json fit.png
"""
import csv
import json
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def plot_benchmark(csv_path, png):
    groups = defaultdict(list)
    for r in _rows(csv_path):
        groups[(r["estimator"], int(r["outlier_level"]))].append(float(r["mse"]))
    levels = sorted({lvl for _, lvl in groups})
    fig, ax = plt.subplots(figsize=(7, 4))
    for k, est in enumerate(("l2e", "mle")):
        pos = [i * 3 + k for i in range(len(levels))]
        ax.boxplot([groups[(est, lvl)] for lvl in levels], positions=pos, widths=0.8, tick_labels=[f"{est}\n{lvl}" for lvl in levels])
    ax.set_ylabel("MSE")
    ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(png)


def plot_path(csv_path, png):
    series = defaultdict(list)
    for r in _rows(csv_path):
        series[(r["estimator"], int(r["coefficient_index"]))].append((float(r["s"]), float(r["value"])))
    fig, axes = plt.subplots(1, 2, figsize=(9, 4), sharey=True)
    for ax, est in zip(axes, ("lasso_mle", "l2e_sparse")):
        for (e, j), pts in sorted(series.items()):
            if e == est:
                s, v = zip(*pts)
                ax.plot(s, v, label=f"x{j + 1}")
        ax.set_title(est)
        ax.set_xlabel("shrinkage factor")
    axes[0].set_ylabel("coefficient")
    axes[1].legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(png)


def plot_fit(data_csv, fit_json, png):
    rows = _rows(data_csv)
    with open(fit_json) as fh:
        doc = json.load(fh)
    names = list(rows[0])
    x = [float(r[names[0]]) for r in rows]
    y = [float(r[names[-1]]) for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    flags = doc["outlier_flags"]
    ax.scatter([a for a, f in zip(x, flags) if not f], [b for b, f in zip(y, flags) if not f], s=6, c="gray")
    ax.scatter([a for a, f in zip(x, flags) if f], [b for b, f in zip(y, flags) if f], s=10, c="red", label="flagged")
    order = sorted(range(len(x)), key=x.__getitem__)
    ax.plot([x[i] for i in order], [doc["fitted"][i] for i in order], c="black", label=f"L2E ({doc['constraint']})")
    ax.legend()
    fig.tight_layout()
    fig.savefig(png)


if __name__ == "__main__":
    kind, *paths = sys.argv[1:]
    {"benchmark": plot_benchmark, "path": plot_path, "fit": plot_fit}[kind](*paths)
