"""Readers for the harness output formats (CSV with '#' provenance, JSON)."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


class InputError(ValueError):
    pass


def read_csv(path):
    """Return (header, columns dict of float arrays); skips '#' lines."""
    header, rows = None, []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip("\r\n")
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
            else:
                rows.append([float(x) for x in line.split(",")])
    if header is None:
        raise InputError(f"{path}: no header row")
    data = np.asarray(rows) if rows else np.empty((0, len(header)))
    return header, {name: data[:, i] for i, name in enumerate(header)}


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def require_columns(path, cols, needed):
    missing = [c for c in needed if c not in cols]
    if missing:
        raise InputError(f"{path}: missing columns {', '.join(missing)}")


def find_inputs(root, patterns):
    """Resolve each glob pattern below root; error lists every miss at once."""
    root = Path(root)
    found = {}
    missing = []
    for pat in patterns:
        hits = sorted(root.rglob(pat))
        if not hits:
            missing.append(pat)
        else:
            found[pat] = hits
    if missing:
        raise InputError(
            f"missing inputs under {root}: {', '.join(missing)}")
    return found
