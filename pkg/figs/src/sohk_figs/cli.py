"""Command-line entry point: ``sohk-figs --in dir --out dir [--only F1,F4]``."""

from __future__ import annotations

import argparse
import sys

from .figures import SPECS, render
from .io import InputError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sohk-figs",
        description="Render the standard figure set from sohk batch outputs.")
    parser.add_argument("--in", dest="in_dir", required=True,
                        help="directory containing harness CSV/JSON outputs "
                             "(searched recursively)")
    parser.add_argument("--out", dest="out_dir", required=True,
                        help="directory for the rendered SVG files")
    parser.add_argument("--only", default=None,
                        help="comma-separated figure ids, e.g. F1,F4 "
                             f"(available: {','.join(sorted(SPECS))})")
    args = parser.parse_args(argv)
    ids = args.only.split(",") if args.only else "all"
    try:
        rendered, errors = render(ids, args.in_dir, args.out_dir)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in rendered:
        print(f"rendered {path}")
    for fid, msg in errors.items():
        print(f"{fid}: {msg}", file=sys.stderr)
    return 0 if not errors else 1


if __name__ == "__main__":
    raise SystemExit(main())
