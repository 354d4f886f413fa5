"""Generate real harness outputs once per session through the sohk CLI."""

import json
import subprocess

import pytest


def run_sohk(scenario, cfg, out_dir, tmp_path):
    cfg_path = tmp_path / f"{scenario}_{abs(hash(json.dumps(cfg, sort_keys=True)))}.json"
    cfg_path.write_text(json.dumps(cfg))
    proc = subprocess.run(
        ["sohk", scenario, "--config", str(cfg_path), "--out", str(out_dir)],
        capture_output=True, text=True)
    # compare exits 1 when its gates fail; outputs are still complete
    assert proc.returncode in (0, 1), proc.stderr
    return proc


@pytest.fixture(scope="session")
def harness_outputs(tmp_path_factory):
    """One directory tree holding outputs of every scenario the figures use."""
    root = tmp_path_factory.mktemp("sohk_out")
    cfgs = tmp_path_factory.mktemp("sohk_cfg")
    run_sohk("coeffs", {"d": 2,
                        "sigma_over_r2": [0.05, 0.1, 0.2, 0.3, 0.45, 0.55],
                        "curve_l_max": 10.0},
             root / "coeffs", cfgs)
    run_sohk("gci", {"d": [2, 3], "sigma_over_r2": [0.1, 0.2],
                     "resolution": 32},
             root / "gci", cfgs)
    run_sohk("kinetic", {"d": 2, "d_x": 0, "epsilon": 0.1, "sigma": 0.2,
                         "r": 1.0, "beta": 4.0, "N": 20000, "dt": 2.5e-3,
                         "T": 0.5, "init": {"kind": "biased-angular", "l": 1.0},
                         "snapshots": 4, "seed": 3},
             root / "kinetic", cfgs)
    run_sohk("spherefp", {"d": 2, "sigma": 0.2, "r": 1.0, "T": 30.0,
                          "dt": 2e-3, "nmodes": 48},
             root / "spherefp", cfgs)
    run_sohk("compare", {"epsilon": [0.2, 0.1], "sigma": 0.2, "r": 1.0,
                         "beta": 4.0, "N": 30000, "T": 0.3, "cells": 16,
                         "soh_refine": 8, "noise_control": True, "seed": 11},
             root / "compare", cfgs)
    return root
