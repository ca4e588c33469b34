"""Plot the CSVs written by the other scripts (needs matplotlib).

    python scripts/plot_results.py runs/sweep
"""

import sys
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from sensebeam.experiment import read_csv


def plot_sweep(run: Path) -> None:
    rows = read_csv(run / "sweep_alpha.csv")
    curves = defaultdict(list)
    for r in rows:
        curves[r["policy"]].append((float(r["alpha"]), float(r["avg_accuracy"])))
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for policy, pts in curves.items():
        pts.sort()
        ax.plot(*zip(*pts), marker="o", label=policy)
    ax.set_xlabel("sensing budget alpha")
    ax.set_ylabel("average top-1..3 accuracy")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(run / "sweep_alpha.png", dpi=150)


def plot_traces(run: Path) -> None:
    traces = sorted(run.glob("queue_trace_a*.csv"))
    if not traces:
        return
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
    for path in traces:
        rows = read_csv(path)
        t = [int(r["t"]) for r in rows]
        top.plot(t, [float(r["running_sense_rate"]) for r in rows], label=path.stem[len("queue_trace_"):])
        bottom.plot(t, [float(r["Q"]) for r in rows])
    top.set_ylabel("running sensing rate")
    bottom.set_ylabel("virtual queue Q")
    bottom.set_xlabel("slot")
    top.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(run / "queue_trace.png", dpi=150)


if __name__ == "__main__":
    for arg in sys.argv[1:] or ["runs/default"]:
        run = Path(arg)
        if (run / "sweep_alpha.csv").exists():
            plot_sweep(run)
        plot_traces(run)
        print(f"figures written to {run}")
