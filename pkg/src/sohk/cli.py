"""Command-line entry point: ``sohk <scenario> --config path [...]``."""

from __future__ import annotations

import argparse
import os
import sys

from .harness import ComparisonReport, ConfigError, parse_config, run_scenario

_SCENARIOS = ("coeffs", "gci", "kinetic", "spherefp", "soh", "compare")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sohk",
        description="Kinetic alignment model, its sphere equilibria and the "
                    "hydrodynamic limit: batch runs with CSV/JSON outputs.")
    sub = parser.add_subparsers(dest="scenario", required=True)
    for name in _SCENARIOS:
        p = sub.add_parser(name, help=f"run the {name} scenario")
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", default=None, help="output directory "
                       "(default: config out_dir or the current directory)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads for independent sub-runs "
                            "(SOHK_THREADS overrides)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = parse_config(args.config, args.scenario)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        config.values["seed"] = args.seed
    if args.threads is not None:
        config.values["threads"] = args.threads
    out_dir = args.out or config.get("out_dir") or os.getcwd()
    try:
        result = run_scenario(config, out_dir)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if isinstance(result, ComparisonReport):
        for row in result.rows:
            print(f"eps={row.epsilon:g}: L1(rho)={row.rho_l1:.6f} "
                  f"Linf(rho)={row.rho_linf:.6f} "
                  f"angular={row.angular_error:.6f} "
                  f"excluded={row.excluded_fraction:.3f}")
        gates = result.gates()
        for name, ok in gates.items():
            print(f"gate {name}: {'pass' if ok else 'FAIL' if ok is not None else 'n/a'}")
        return 0 if all(v for v in gates.values() if v is not None) and \
            all(v is not False for v in gates.values()) else 1
    print(f"wrote outputs to {out_dir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
