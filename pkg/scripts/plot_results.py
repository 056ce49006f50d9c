"""Plot gap, speed and input per iteration from the long-format plot CSVs.

Needs matplotlib (``pip install -e .[plot]``).

    python3 scripts/plot_results.py results/bridge
"""
import argparse
import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def load(path):
    series = defaultdict(lambda: defaultdict(list))
    with open(path) as fh:
        rows = csv.DictReader(line for line in fh if not line.startswith("#"))
        for r in rows:
            series[r["series"]][int(r["iteration"])].append((int(r["t"]), float(r["value"])))
    return series


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("run_dir")
    args = ap.parse_args()
    run_dir = Path(args.run_dir)
    srl = load(run_dir / "srlmpc_plot.csv")
    base = load(run_dir / "baseline_plot.csv")

    fig, axes = plt.subplots(3, 1, figsize=(8, 9), sharex=True)
    for ax, name, label in zip(axes, ("position", "velocity", "input"),
                               ("follower position [m]", "speed [m/s]", "input [m/s^2]")):
        for it, pts in sorted(srl[name].items()):
            if it < 0:
                continue
            t, v = zip(*pts)
            ax.plot([k * 0.2 for k in t], v, lw=0.8, alpha=0.4 + 0.6 * (it == max(srl[name])),
                    label=f"iteration {it}")
        t, v = zip(*base[name][-1])
        ax.plot([k * 0.2 for k in t], v, "k--", lw=1.2, label="baseline")
        ax.set_ylabel(label)
    axes[0].axhspan(435, 480, color="grey", alpha=0.2)
    axes[0].legend(fontsize=7, ncol=2)
    axes[-1].set_xlabel("time [s]")
    fig.tight_layout()
    out = run_dir / "iterations.png"
    fig.savefig(out, dpi=120)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
