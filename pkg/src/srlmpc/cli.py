"""Command line entry point: ``srlmpc run | compare | validate-config``.

Exit codes: 0 success, 2 configuration error, 3 infeasible run.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import InfeasibleError, ValidationError
from .scenario import MODES, bundled_config, compare, emit_csv, emit_plot_data, load_config, run_scenario

EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3

METRIC_ORDER = ("control_cost", "dropout_steps", "dead_zone_steps", "saturation_steps", "min_ttc",
                "min_gap", "iterations")


def _resolve(path_or_name: str) -> Path:
    path = Path(path_or_name)
    if path.exists() or len(path.parts) > 1:
        return path  # a missing file path is reported by the loader
    name = path_or_name if path_or_name.endswith(".cfg") else path_or_name + ".cfg"
    return bundled_config(name)


def _config(args):
    return load_config(_resolve(args.config), seed=args.seed, L_max=args.max_iters)


def _print_metrics(label: str, metrics: dict):
    print(f"[{label}]")
    for key in METRIC_ORDER:
        print(f"  {key:18s} {metrics[key]:.6g}")


def _write_outputs(art, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    emit_csv(art, out_dir)
    emit_plot_data(art, out_dir / f"{art.mode}_plot.csv")


def cmd_run(args) -> int:
    cfg = _config(args)
    art = run_scenario(cfg, args.mode)
    _print_metrics(args.mode, art.metrics())
    if art.lmpc is not None:
        for row in art.iterations:
            print(f"  iteration {row.iteration:2d}  J={row.cost:.6f}  control={row.control_cost:.4f}"
                  f"  saturated={row.saturation_steps}  dropped={row.dropout_steps}")
    if args.out_dir:
        out = Path(args.out_dir)
        _write_outputs(art, out)
        (out / "config.cfg").write_text(cfg.echo())
    return 0


def cmd_compare(args) -> int:
    cfg = _config(args)
    results = compare(cfg)
    for mode, (_, metrics) in results.items():
        _print_metrics(mode, metrics)
    if args.out_dir:
        out = Path(args.out_dir)
        for art, _ in results.values():
            _write_outputs(art, out)
        (out / "config.cfg").write_text(cfg.echo())
        with open(out / "comparison.csv", "w", newline="\n") as fh:
            fh.write("# srlmpc-comparison v1\n")
            fh.write("mode," + ",".join(METRIC_ORDER) + "\n")
            for mode, (_, m) in results.items():
                fh.write(mode + "," + ",".join(f"{float(m[k]):.9g}" for k in METRIC_ORDER) + "\n")
    return 0


def cmd_validate(args) -> int:
    cfg = _config(args)
    sys.stdout.write(cfg.echo())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="srlmpc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log learning iterations")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default="bridge",
                       help="config file, or the name of a bundled one (bridge, perfect)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--max-iters", type=int, default=None, help="override L_max")

    p_run = sub.add_parser("run", help="simulate one controller")
    common(p_run)
    p_run.add_argument("--mode", choices=MODES, default="srlmpc")
    p_run.add_argument("--out-dir", default=None, help="write CSV and plot data here")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="baseline versus SR-LMPC on one config")
    common(p_cmp)
    p_cmp.add_argument("--out-dir", default=None)
    p_cmp.set_defaults(func=cmd_compare)

    p_val = sub.add_parser("validate-config", help="check a config and print resolved values")
    common(p_val)
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
