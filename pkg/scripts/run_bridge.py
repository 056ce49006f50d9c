"""Baseline vs SR-LMPC on the bridge scenario; writes CSVs and prints a summary.

    python3 scripts/run_bridge.py --out-dir results/bridge
"""
import argparse
import time
from pathlib import Path

from srlmpc.cli import METRIC_ORDER
from srlmpc.scenario import bundled_config, compare, emit_csv, emit_plot_data, load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=None, help="config file (default: bundled bridge.cfg)")
    ap.add_argument("--out-dir", default="results/bridge")
    args = ap.parse_args()

    cfg = load_config(args.config or bundled_config("bridge.cfg"))
    t0 = time.perf_counter()
    results = compare(cfg)
    elapsed = time.perf_counter() - t0
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(cfg.echo())
    print(f"{'metric':18s} {'baseline':>12s} {'srlmpc':>12s}")
    for key in METRIC_ORDER:
        print(f"{key:18s} {results['baseline'][1][key]:12.6g} {results['srlmpc'][1][key]:12.6g}")
    for art, _ in results.values():
        emit_csv(art, out)
        emit_plot_data(art, out / f"{art.mode}_plot.csv")
    art = results["srlmpc"][0]
    print("\niteration  J            control   saturated  dropped")
    for row in art.iterations:
        print(f"{row.iteration:9d}  {row.cost:11.4f}  {row.control_cost:8.3f}  {row.saturation_steps:9d}"
              f"  {row.dropout_steps:7d}")
    print(f"\nboth runs in {elapsed:.2f} s; CSVs in {out}")


if __name__ == "__main__":
    main()
