"""Sweep the initial gap and the gap weight, recording what each run achieves.

The initial gap is not fixed by the scenario table, and the outcome depends
on it: with a small gap the follower never has to pass through the zone
with the leader, with a large one it cannot avoid saturating. Writes one CSV
row per setting.

    python3 scripts/sensitivity_sweep.py --out results/sensitivity.csv
"""
import argparse
import math
from pathlib import Path

from srlmpc.errors import InfeasibleError
from srlmpc.scenario import bundled_config, compare, load_config

COLUMNS = ("leader_position", "w_gap", "base_control", "base_zone_steps", "base_dropped",
           "srl_control", "srl_iter1_control", "srl_zone_steps", "srl_dropped", "srl_saturated",
           "iterations", "cost_increases", "cost_increases_after_1")


def sweep(gaps, w_gaps, base_cfg):
    for gap in gaps:
        for w in w_gaps:
            cfg = load_config(base_cfg, leader_position=gap, w_gap=w)
            try:
                res = compare(cfg)
            except InfeasibleError as exc:
                print(f"gap={gap} w_gap={w}: infeasible ({exc})")
                continue
            (_, mb), (art, ms) = res["baseline"], res["srlmpc"]
            J = art.lmpc.costs
            ups = [L for L in range(1, len(J)) if J[L] > J[L - 1] + 1e-6]
            yield (gap, w, mb["control_cost"], mb["dead_zone_steps"], mb["dropout_steps"],
                   ms["control_cost"], ms.get("iteration1_control_cost", math.nan), ms["dead_zone_steps"],
                   ms["dropout_steps"], ms["saturation_steps"], len(J) - 1, len(ups),
                   sum(1 for L in ups if L >= 2))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--gaps", type=float, nargs="+", default=[100, 120, 150, 180, 200])
    ap.add_argument("--w-gap", type=float, nargs="+", default=[0.005, 0.05])
    ap.add_argument("--out", default="results/sensitivity.csv")
    args = ap.parse_args()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="\n") as fh:
        fh.write(",".join(COLUMNS) + "\n")
        for row in sweep(args.gaps, args.w_gap, bundled_config("bridge.cfg")):
            print(dict(zip(COLUMNS, row)))
            fh.write(",".join(f"{v:.9g}" if isinstance(v, float) else str(v) for v in row) + "\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
