"""Batch orchestration: config parsing, scenario runners, outputs.

Every output file starts with a provenance block (resolved config, code
version, seed) so that re-running a config byte-reproduces it.  The compare
scenario operationalizes the hydrodynamic limit: kinetic runs at each epsilon
against one finely resolved run of the limit system, with moment errors and
monotone-decrease gates in the report.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict

import numpy as np

from . import __version__
from .gci import ChiSolution, chi_semianalytic_d2, compute_kd, gci_residual, solve_chi
from .kinetic import CellDecomposition, ParticleEnsemble, Moments, moments, step
from .soh import SohState, renormalize, run as soh_run
from .spherefp import AngularDensity, evolve, stationary_l
from .spherequad import sphere_grid
from .vmf import (ModelParams, VmfEquilibrium, lambda_of_l, mu_of_l,
                  sample_vmf, solve_concentration)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config schema
# ---------------------------------------------------------------------------

def _positive(x):
    return isinstance(x, (int, float)) and x > 0


def _pos_int(x):
    return isinstance(x, int) and x > 0


_COMMON = {
    "scenario": (False, lambda v: isinstance(v, str), None),
    "seed": (False, lambda v: isinstance(v, int) and v >= 0, 0),
    "out_dir": (False, lambda v: isinstance(v, str), None),
    "threads": (False, _pos_int, 1),
}

_SCHEMAS = {
    "coeffs": {
        "d": (True, lambda v: isinstance(v, int) and v >= 2, None),
        "r": (False, _positive, 1.0),
        "sigma_over_r2": (True, lambda v: isinstance(v, (list, float, int)), None),
        "curve_l_max": (False, _positive, 10.0),
        "curve_points": (False, _pos_int, 201),
    },
    "gci": {
        "d": (True, lambda v: isinstance(v, (int, list)), None),
        "r": (False, _positive, 1.0),
        "sigma_over_r2": (True, lambda v: isinstance(v, (list, float, int)), None),
        "resolution": (False, _pos_int, 48),
        "chi_samples": (False, _pos_int, 201),
    },
    "kinetic": {
        "d": (True, lambda v: v in (2, 3), None),
        "d_x": (True, lambda v: v in (0, 1, 2), None),
        "epsilon": (True, _positive, None),
        "sigma": (True, _positive, None),
        "r": (True, _positive, None),
        "beta": (True, _positive, None),
        "N": (True, _pos_int, None),
        "dt": (True, _positive, None),
        "T": (True, _positive, None),
        "cells": (False, _pos_int, 32),
        "L": (False, _positive, 1.0),
        "init": (False, lambda v: isinstance(v, dict), {"kind": "vmf"}),
        "n_speed_bins": (False, _pos_int, 40),
        "snapshots": (False, _pos_int, 5),
    },
    "spherefp": {
        "d": (True, lambda v: v in (2, 3), None),
        "sigma": (True, _positive, None),
        "r": (True, _positive, None),
        "T": (True, _positive, None),
        "epsilon": (False, _positive, 1.0),
        "nmodes": (False, _pos_int, 48),
        "dt": (False, _positive, 2e-3),
        "init": (False, lambda v: isinstance(v, dict), {"kind": "biased-angular", "bias": 0.5}),
        "series_points": (False, _pos_int, 200),
    },
    "soh": {
        "d": (False, lambda v: v in (2, 3), 2),
        "d_x": (True, lambda v: v in (1, 2), None),
        "sigma": (True, _positive, None),
        "r": (True, _positive, None),
        "T": (True, _positive, None),
        "cells": (False, lambda v: _pos_int(v) or (isinstance(v, list) and all(map(_pos_int, v))), 128),
        "L": (False, lambda v: _positive(v) or (isinstance(v, list) and all(map(_positive, v))), 1.0),
        "cfl": (False, _positive, 0.4),
        "init": (False, lambda v: isinstance(v, dict), {}),
        "snapshots": (False, _pos_int, 3),
    },
    "compare": {
        "d": (False, lambda v: v == 2, 2),
        "d_x": (False, lambda v: v == 1, 1),
        "epsilon": (True, lambda v: isinstance(v, list), None),
        "sigma": (True, _positive, None),
        "r": (True, _positive, None),
        "beta": (True, _positive, None),
        "N": (True, _pos_int, None),
        "T": (True, _positive, None),
        "cells": (False, _pos_int, 32),
        "L": (False, _positive, 1.0),
        "dt_factor": (False, _positive, 0.025),   # dt = epsilon * dt_factor
        "soh_refine": (False, _pos_int, 16),
        "init": (False, lambda v: isinstance(v, dict), {}),
        "noise_control": (False, lambda v: isinstance(v, bool), True),
        "gates": (False, lambda v: isinstance(v, list),
                  ["rho_l1_decreasing", "angular_decreasing", "noise_floor_ok"]),
    },
}


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)


def parse_config(path: str, scenario: str) -> RunConfig:
    """Load and validate a JSON config for the given scenario (strict keys)."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return validate_config(raw, scenario)


def validate_config(raw: dict, scenario: str) -> RunConfig:
    if scenario not in _SCHEMAS:
        raise ConfigError(f"unknown scenario {scenario!r}; "
                          f"expected one of {sorted(_SCHEMAS)}")
    if "scenario" in raw and raw["scenario"] != scenario:
        raise ConfigError(f"config names scenario {raw['scenario']!r} "
                          f"but {scenario!r} was requested")
    schema = {**_COMMON, **_SCHEMAS[scenario]}
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    missing = sorted(k for k, (req, _, _) in schema.items()
                     if req and k not in raw)
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    values = {}
    for key, (_req, check, default) in schema.items():
        if key == "scenario":
            continue
        if key in raw:
            if not check(raw[key]):
                raise ConfigError(f"invalid value for {key!r}: {raw[key]!r}")
            values[key] = raw[key]
        elif default is not None or not _req:
            values[key] = default
    if scenario == "compare":
        eps = values["epsilon"]
        if len(eps) < 2 or not all(_positive(e) for e in eps):
            raise ConfigError("compare needs an epsilon list with >= 2 positive values")
        values["epsilon"] = sorted((float(e) for e in eps), reverse=True)
    return RunConfig(scenario=scenario, values=values)


# ---------------------------------------------------------------------------
# provenance and writers
# ---------------------------------------------------------------------------

def _provenance_lines(config: RunConfig) -> list[str]:
    body = json.dumps(config.values, sort_keys=True, separators=(",", ":"))
    return [f"# sohk {__version__}",
            f"# scenario: {config.scenario}",
            f"# config: {body}",
            f"# seed: {config.get('seed', 0)}"]


def write_csv(path: str, header: list[str], rows, config: RunConfig):
    """RFC-4180 CSV ('.' decimal, header row) behind a '#' provenance block."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in _provenance_lines(config):
            fh.write(line + "\r\n")
        fh.write(",".join(header) + "\r\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\r\n")


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def write_json(path: str, payload: dict, config: RunConfig):
    payload = {"provenance": {"version": __version__,
                              "scenario": config.scenario,
                              "seed": config.get("seed", 0),
                              "config": config.values},
               **payload}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_csv(path: str):
    """Read back a harness CSV: (provenance lines, header, float columns)."""
    prov, header, rows = [], None, []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip("\r\n")
            if not line:
                continue
            if line.startswith("#"):
                prov.append(line)
            elif header is None:
                header = line.split(",")
            else:
                rows.append([float(x) for x in line.split(",")])
    return prov, header, np.asarray(rows)


# ---------------------------------------------------------------------------
# scenario runners
# ---------------------------------------------------------------------------

def run_coeffs(config: RunConfig, out_dir: str) -> dict:
    d = config["d"]
    r = config["r"]
    sors = config["sigma_over_r2"]
    if not isinstance(sors, list):
        sors = [sors]
    rows = []
    for sor in sors:
        params = ModelParams(d=d, r=r, beta=1.0, sigma=sor * r ** 2)
        lst = solve_concentration(params)
        lam = lambda_of_l(lst, d)
        rows.append((sor, lst, lam, lam, params.sigma * lst / r))
    write_csv(os.path.join(out_dir, "coeffs.csv"),
              ["sigma_over_r2", "l_star", "lambda_l_star",
               "order_parameter", "mean_speed"], rows, config)

    lgrid = np.linspace(0.0, config["curve_l_max"], config["curve_points"])
    curve = [(l, lambda_of_l(l, d), mu_of_l(l, d)) for l in lgrid]
    write_csv(os.path.join(out_dir, "curve.csv"),
              ["l", "lambda_l", "mu_l"], curve, config)

    ref = next((s for s in sors if s < 1.0 / d), sors[0])
    ref_l = solve_concentration(ModelParams(d=d, r=r, beta=1.0, sigma=ref * r ** 2))
    payload = {"d": d, "r": r, "reference_sigma_over_r2": ref,
               "reference_l_star": ref_l,
               "critical_ratio": 1.0 / d}
    write_json(os.path.join(out_dir, "coeffs.json"), payload, config)
    return payload


def run_gci(config: RunConfig, out_dir: str) -> dict:
    ds = config["d"] if isinstance(config["d"], list) else [config["d"]]
    sors = config["sigma_over_r2"]
    if not isinstance(sors, list):
        sors = [sors]
    r = config["r"]
    sweep = []
    records = {}
    for d in ds:
        for sor in sors:
            sigma = sor * r ** 2
            lst = solve_concentration(ModelParams(d=d, r=r, beta=1.0, sigma=sigma))
            chi = solve_chi(d, lst, sigma, r, resolution=config["resolution"])
            grid = sphere_grid(d, r, 256 if d == 2 else 24)
            resid = gci_residual(chi, grid)
            tag = f"d{d}_sor{sor:g}"
            cgrid = np.cos(np.linspace(math.pi, 0.0, config["chi_samples"]))
            write_csv(os.path.join(out_dir, f"chi_{tag}.csv"),
                      ["c", "chi"],
                      zip(cgrid, chi.chi(cgrid)), config)
            rec = {"d": d, "sigma_over_r2": sor, "l_star": lst,
                   "k_d": chi.k_d, "residual": resid, "J_value": chi.j_value}
            write_json(os.path.join(out_dir, f"gci_{tag}.json"), rec, config)
            records[tag] = rec
            sweep.append((d, sor, lst, chi.k_d))
    write_csv(os.path.join(out_dir, "kd_sweep.csv"),
              ["d", "sigma_over_r2", "l_star", "k_d"], sweep, config)
    return records


# -- kinetic helpers --------------------------------------------------------

def _bump_profiles(init: dict, L: float):
    amp = init.get("rho_amp", 0.5)
    width = init.get("rho_width", 0.12)
    center = init.get("rho_center", 0.5)
    aamp = init.get("angle_amp", 0.4)
    waves = init.get("angle_waves", 1)

    def rho0(x):
        return 1.0 + amp * np.exp(-0.5 * ((x - center * L) / (width * L)) ** 2)

    def phi0(x):
        return aamp * np.sin(2.0 * math.pi * waves * x / L)

    return rho0, phi0


def _sample_positions_1d(rho0, L, n, rng):
    xg = np.linspace(0.0, L, 4001)
    pdf = rho0(xg)
    cdf = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) / 2 * np.diff(xg))])
    total = cdf[-1]
    return np.interp(rng.uniform(size=n), cdf / total, xg), total


def init_ensemble(config: RunConfig) -> tuple[ParticleEnsemble, CellDecomposition,
                                              ModelParams]:
    """Build the initial particle ensemble for a kinetic scenario config."""
    d, d_x = config["d"], config["d_x"]
    params = ModelParams(d=d, r=config["r"], beta=config["beta"],
                         sigma=config["sigma"], epsilon=config["epsilon"])
    N = config["N"]
    L = config["L"]
    cells = CellDecomposition(
        d_x=d_x, lengths=(L,) * d_x, cells_per_dim=(config["cells"],) * d_x)
    seed = config.get("seed", 0)
    rng = np.random.default_rng(seed)
    init = dict(config.get("init") or {"kind": "vmf"})
    kind = init.get("kind", "vmf")
    total_mass = 1.0

    if d_x == 0:
        X = np.zeros((N, 0))
    elif kind == "gaussian-bump":
        rho0, _ = _bump_profiles(init, L)
        x, total_mass = _sample_positions_1d(rho0, L, N, rng)
        X = x[:, None]
    else:
        X = rng.uniform(0.0, L, size=(N, d_x))
        total_mass = L ** d_x

    lstar = solve_concentration(params)
    if kind == "uniform":
        g = rng.standard_normal((N, d))
        V = params.r * g / np.linalg.norm(g, axis=1)[:, None]
    elif kind == "biased-angular":
        # a non-equilibrium start: angular density ~ exp(l cos theta), any l
        if d != 2:
            raise ConfigError("biased-angular init needs d = 2")
        theta = _sample_vmf_angles(init.get("l", 1.0), N, rng)
        V = params.r * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    elif kind == "vmf":
        l = init.get("l", "lstar")
        l = lstar if l == "lstar" else float(l)
        Om = np.asarray(init.get("Omega", _axis(d)), dtype=float)
        Om = Om / np.linalg.norm(Om)
        eq = VmfEquilibrium(params=params, rho=1.0, l=l, Omega=Om)
        V = sample_vmf(N, eq, seed=seed + 1)
    elif kind == "gaussian-bump":
        # velocities: equilibrium law around the local orientation per cell
        if d != 2:
            raise ConfigError("gaussian-bump init implemented for d = 2")
        _, phi0 = _bump_profiles(init, L)
        centers = cells.centers()[:, 0]
        phase = phi0(centers)[cells.cell_index(X)]
        theta = _sample_vmf_angles(lstar, N, rng) + phase
        V = params.r * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    else:
        raise ConfigError(f"unknown init kind {kind!r}")
    ens = ParticleEnsemble(X=X, V=V, total_mass=total_mass, seed=seed)
    return ens, cells, params


def _sample_vmf_angles(l: float, n: int, rng) -> np.ndarray:
    """Angles with density proportional to exp(l cos t) on (-pi, pi]."""
    out = np.empty(n)
    filled = 0
    while filled < n:
        m = max(2 * (n - filled), 64)
        cand = rng.uniform(-math.pi, math.pi, m)
        keep = rng.uniform(size=m) < np.exp(l * (np.cos(cand) - 1.0))
        got = cand[keep][: n - filled]
        out[filled: filled + got.size] = got
        filled += got.size
    return out


def _axis(d: int):
    e = [0.0] * d
    e[0] = 1.0
    return e


def run_kinetic(config: RunConfig, out_dir: str) -> dict:
    ens, cells, params = init_ensemble(config)
    dt, T = config["dt"], config["T"]
    nsteps = max(1, int(round(T / dt)))
    snap_at = sorted({int(round(i * nsteps / max(config["snapshots"] - 1, 1)))
                      for i in range(config["snapshots"])} | {0, nsteps})
    speed_range = (0.0, 2.0 * params.r)
    moment_rows, hist_rows = [], []
    centers = cells.centers()

    def record(t, e):
        mom = moments(e, cells, n_speed_bins=config["n_speed_bins"],
                      speed_range=speed_range)
        for i in range(cells.n_cells):
            row = [t, i]
            row += list(centers[i]) if cells.d_x else []
            row += [mom.rho[i]]
            row += list(mom.u[i])
            row += list(mom.Omega[i])
            moment_rows.append(row)
        dens = mom.speed_hist.sum(axis=0)
        width = mom.speed_bins[1] - mom.speed_bins[0]
        dens = dens / max(dens.sum() * width, 1e-300)
        mid = 0.5 * (mom.speed_bins[1:] + mom.speed_bins[:-1])
        hist_rows.extend([(t, m, v) for m, v in zip(mid, dens)])

    t = 0.0
    record(t, ens)
    for k in range(1, nsteps + 1):
        ens = step(ens, params, dt, cells)
        t = k * dt
        if k in snap_at:
            record(t, ens)

    d, d_x = config["d"], cells.d_x
    header = ["t", "cell"] + [f"x{i}" for i in range(d_x)] + ["rho"] \
        + [f"u{i}" for i in range(d)] + [f"Omega{i}" for i in range(d)]
    write_csv(os.path.join(out_dir, "moments.csv"), header, moment_rows, config)
    write_csv(os.path.join(out_dir, "speed_hist.csv"),
              ["t", "speed", "density"], hist_rows, config)
    speeds = np.linalg.norm(ens.V, axis=1)
    summary = {"final_time": t, "mass": ens.total_mass,
               "speed_mean": float(speeds.mean()),
               "speed_std": float(speeds.std())}
    write_json(os.path.join(out_dir, "kinetic.json"), summary, config)
    return summary


def run_spherefp(config: RunConfig, out_dir: str) -> dict:
    d, r = config["d"], config["r"]
    params = ModelParams(d=d, r=r, beta=1.0, sigma=config["sigma"],
                         epsilon=config["epsilon"])
    nmodes = config["nmodes"]
    init = dict(config["init"])
    bias = init.get("bias", 0.5)
    if d == 2:
        f = AngularDensity.from_angular_function(
            2, r, nmodes,
            lambda th: (1.0 + bias * np.cos(th)) / (2 * math.pi * r))
    else:
        f = AngularDensity.from_angular_function(
            3, r, nmodes,
            lambda c: (1.0 + bias * c) / (4 * math.pi * r ** 2))
    dt, T = config["dt"], config["T"]
    nsteps = max(1, int(round(T / dt)))
    chunk = max(1, nsteps // config["series_points"])
    rows = [(0.0, f.mean_velocity_magnitude() / r, stationary_l(f, params))]
    done = 0
    while done < nsteps:
        n = min(chunk, nsteps - done)
        f = evolve(f, params, dt, n)
        done += n
        rows.append((done * dt, f.mean_velocity_magnitude() / r,
                     stationary_l(f, params)))
    write_csv(os.path.join(out_dir, "series.csv"),
              ["t", "u_over_r", "l_hat"], rows, config)
    x, vals = f.grid_values()
    write_csv(os.path.join(out_dir, "final_state.csv"),
              ["theta" if d == 2 else "c", "f"], zip(x, vals), config)
    lst = solve_concentration(params)
    payload = {"l_hat_final": rows[-1][2], "l_star": lst,
               "u_over_r_final": rows[-1][1],
               "order_parameter_target": lambda_of_l(lst, d), "mass": f.mass}
    write_json(os.path.join(out_dir, "spherefp.json"), payload, config)
    return payload


def _soh_coefficients(d: int, sigma: float, r: float):
    """c1, k_d r and r/l from the equilibrium and invariant computations."""
    params = ModelParams(d=d, r=r, beta=1.0, sigma=sigma)
    lst = solve_concentration(params)
    if lst <= 0:
        raise ConfigError("supercritical sigma/r^2: the limit system needs l > 0")
    chi = solve_chi(d, lst, sigma, r)
    return lst, sigma * lst / r, chi.k_d * r, r / lst


def _soh_initial(config: RunConfig, m_per_dim, lengths):
    init = dict(config.get("init") or {})
    d = config.get("d", 2)
    if config["d_x"] == 1:
        L = lengths[0]
        rho0, phi0 = _bump_profiles(init, L)
        x = (np.arange(m_per_dim[0]) + 0.5) * (L / m_per_dim[0])
        rho = rho0(x)
        phi = phi0(x)
        Om = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        if d == 3:
            Om = np.concatenate([Om, np.zeros((len(x), 1))], axis=1)
        return rho, Om
    Lx, Ly = lengths
    mx, my = m_per_dim
    x = (np.arange(mx) + 0.5) * (Lx / mx)
    y = (np.arange(my) + 0.5) * (Ly / my)
    X, Y = np.meshgrid(x, y, indexing="ij")
    rho0, phi0 = _bump_profiles(init, Lx)
    rho = rho0(X) * (1.0 + 0.0 * Y)
    phi = phi0(X) + init.get("angle_amp_y", 0.2) * np.sin(2 * math.pi * Y / Ly)
    Om = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    if d == 3:
        Om = np.concatenate([Om, np.zeros(Om.shape[:-1] + (1,))], axis=-1)
    return rho, renormalize(Om)


def run_soh(config: RunConfig, out_dir: str) -> dict:
    d_x = config["d_x"]
    cells = config["cells"]
    m_per_dim = tuple(cells) if isinstance(cells, list) else (cells,) * d_x
    L = config["L"]
    lengths = tuple(L) if isinstance(L, list) else (L,) * d_x
    lst, c1, kdr, r_over_l = _soh_coefficients(
        config.get("d", 2), config["sigma"], config["r"])
    rho, Om = _soh_initial(config, m_per_dim, lengths)
    state = SohState(lengths=lengths, rho=rho, Omega=Om,
                     c1=c1, kdr=kdr, r_over_l=r_over_l)
    mass0 = state.total_mass
    T = config["T"]
    snaps = config["snapshots"]
    rows = []

    def record(t, s):
        if d_x == 1:
            x = (np.arange(m_per_dim[0]) + 0.5) * (lengths[0] / m_per_dim[0])
            for i in range(m_per_dim[0]):
                rows.append([t, x[i], s.rho[i]] + list(s.Omega[i]))
        else:
            for i in range(m_per_dim[0]):
                for j in range(m_per_dim[1]):
                    rows.append([t,
                                 (i + 0.5) * lengths[0] / m_per_dim[0],
                                 (j + 0.5) * lengths[1] / m_per_dim[1],
                                 s.rho[i, j]] + list(s.Omega[i, j]))

    record(0.0, state)
    for k in range(1, snaps + 1):
        state = soh_run(state, T / snaps, cfl=config["cfl"])
        record(k * T / snaps, state)
    header = ["t"] + [f"x{i}" for i in range(d_x)] + ["rho"] \
        + [f"Omega{i}" for i in range(state.Omega.shape[-1])]
    write_csv(os.path.join(out_dir, "fields.csv"), header, rows, config)
    payload = {"l_star": lst, "c1": c1, "kdr": kdr, "r_over_l": r_over_l,
               "mass_initial": mass0, "mass_final": state.total_mass,
               "mass_drift": abs(state.total_mass - mass0) / mass0,
               "min_omega_norm": float(np.linalg.norm(state.Omega, axis=-1).min()),
               "max_omega_norm": float(np.linalg.norm(state.Omega, axis=-1).max())}
    write_json(os.path.join(out_dir, "soh.json"), payload, config)
    return payload


# ---------------------------------------------------------------------------
# the compare pipeline
# ---------------------------------------------------------------------------

@dataclass
class ComparisonRow:
    epsilon: float
    n_particles: int
    rho_l1: float
    rho_linf: float
    angular_error: float
    excluded_fraction: float


@dataclass
class ComparisonReport:
    rows: list[ComparisonRow]            # sorted by epsilon descending
    noise_floor_rho_l1: float | None
    noise_floor_angular: float | None
    rho_l1_decreasing: bool
    angular_decreasing: bool
    noise_floor_ok: bool | None
    coefficients: dict

    def gates(self) -> dict:
        return {"rho_l1_decreasing": self.rho_l1_decreasing,
                "angular_decreasing": self.angular_decreasing,
                "noise_floor_ok": self.noise_floor_ok}


def moment_errors(rho_a, om_a, rho_b, om_b, dx: float, unorm_a=None,
                  u_floor: float = 0.0):
    """L1/Linf density errors and the mass-weighted angular error.

    Cells whose mean-velocity magnitude ``unorm_a`` falls below ``u_floor``
    are excluded from the angular error (the direction of a near-zero vector
    is noise); the excluded fraction is returned alongside.
    """
    rho_a = np.asarray(rho_a, float)
    rho_b = np.asarray(rho_b, float)
    l1 = float(np.abs(rho_a - rho_b).sum() * dx)
    linf = float(np.abs(rho_a - rho_b).max())
    keep = np.ones(rho_a.shape[0], dtype=bool)
    if unorm_a is not None:
        keep = np.asarray(unorm_a) > u_floor
    # chord form of the angle: exactly zero for identical fields and well
    # conditioned where arccos of a dot product is not
    chord = np.linalg.norm(np.asarray(om_a)[keep] - np.asarray(om_b)[keep],
                           axis=1)
    angles = 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))
    wts = rho_a[keep]
    ang = float((angles * wts).sum() / max(wts.sum(), 1e-300))
    return l1, linf, ang, float(1.0 - keep.mean())


def _kinetic_final_moments(config: RunConfig, eps: float, N: int,
                           seed: int, lstar: float):
    """Run one kinetic sub-run; returns per-cell (rho, Omega, |u|)."""
    sub = {
        "d": 2, "d_x": 1, "epsilon": eps, "sigma": config["sigma"],
        "r": config["r"], "beta": config["beta"], "N": N,
        "dt": eps * config["dt_factor"],
        "T": config["T"], "cells": config["cells"], "L": config["L"],
        "init": {"kind": "gaussian-bump", **(config.get("init") or {})},
        "seed": seed,
    }
    subcfg = validate_config(sub, "kinetic")
    ens, cells, params = init_ensemble(subcfg)
    nsteps = max(1, int(round(sub["T"] / sub["dt"])))
    dt = sub["T"] / nsteps
    for _ in range(nsteps):
        ens = step(ens, params, dt, cells)
    mom = moments(ens, cells)
    unorm = np.linalg.norm(mom.u, axis=1)
    return mom.rho, mom.Omega, unorm


def run_compare(config: RunConfig, out_dir: str) -> ComparisonReport:
    """Kinetic eps-sweep against the finely resolved limit system at time T."""
    eps_list = config["epsilon"]
    d = 2
    r, sigma = config["r"], config["sigma"]
    lstar, c1, kdr, r_over_l = _soh_coefficients(d, sigma, r)
    M = config["cells"]
    L = config["L"]
    refine = config["soh_refine"]

    # reference solution of the limit system on a refined grid
    fine = M * refine
    init = dict(config.get("init") or {})
    rho0f, phi0f = _bump_profiles(init, L)
    xf = (np.arange(fine) + 0.5) * (L / fine)
    phif = phi0f(xf)
    state = SohState(lengths=(L,), rho=rho0f(xf),
                     Omega=np.stack([np.cos(phif), np.sin(phif)], axis=1),
                     c1=c1, kdr=kdr, r_over_l=r_over_l)
    state = soh_run(state, config["T"])
    rho_soh = state.rho.reshape(M, refine).mean(axis=1)
    om_soh = renormalize(state.Omega.reshape(M, refine, 2).mean(axis=1))

    seed0 = config.get("seed", 0)
    jobs = [(eps, config["N"], seed0 + 1000 * (i + 1))
            for i, eps in enumerate(eps_list)]
    if config["noise_control"]:
        jobs.append((min(eps_list), 2 * config["N"],
                     seed0 + 1000 * (len(eps_list) + 1)))

    threads = int(os.environ.get("SOHK_THREADS", config.get("threads", 1)))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(
                lambda j: _kinetic_final_moments(config, j[0], j[1], j[2], lstar),
                jobs))
    else:
        results = [_kinetic_final_moments(config, *j, lstar) for j in jobs]

    dx = L / M
    u_floor = 0.1 * r * lambda_of_l(lstar, d)
    rows = []
    per_eps_fields = {}
    for (eps, N, _), (rho_k, om_k, unorm) in zip(jobs, results):
        l1, linf, ang, excl = moment_errors(rho_k, om_k, rho_soh, om_soh,
                                            dx, unorm, u_floor)
        rows.append(ComparisonRow(
            epsilon=eps, n_particles=N, rho_l1=l1, rho_linf=linf,
            angular_error=ang, excluded_fraction=excl))
        per_eps_fields.setdefault((eps, N), (rho_k, om_k))

    # split off the control run
    control = None
    if config["noise_control"]:
        control = rows.pop()

    noise_rho = noise_ang = None
    noise_ok = None
    if control is not None:
        base = next(r_ for r_ in rows if r_.epsilon == control.epsilon)
        noise_rho = abs(control.rho_l1 - base.rho_l1)
        noise_ang = abs(control.angular_error - base.angular_error)
        gaps_rho = [rows[i].rho_l1 - rows[i + 1].rho_l1
                    for i in range(len(rows) - 1)]
        gaps_ang = [rows[i].angular_error - rows[i + 1].angular_error
                    for i in range(len(rows) - 1)]
        noise_ok = bool(noise_rho < min(gaps_rho) and noise_ang < min(gaps_ang))

    report = ComparisonReport(
        rows=rows,
        noise_floor_rho_l1=noise_rho,
        noise_floor_angular=noise_ang,
        rho_l1_decreasing=all(rows[i].rho_l1 > rows[i + 1].rho_l1
                              for i in range(len(rows) - 1)),
        angular_decreasing=all(rows[i].angular_error > rows[i + 1].angular_error
                               for i in range(len(rows) - 1)),
        noise_floor_ok=noise_ok,
        coefficients={"l_star": lstar, "c1": c1, "kdr": kdr,
                      "r_over_l": r_over_l})

    x = (np.arange(M) + 0.5) * dx
    write_csv(os.path.join(out_dir, "soh_final.csv"),
              ["x", "rho", "Omega0", "Omega1"],
              [(x[i], rho_soh[i], om_soh[i, 0], om_soh[i, 1]) for i in range(M)],
              config)
    for (eps, N), (rho_k, om_k) in per_eps_fields.items():
        suffix = f"eps{eps:g}" + ("" if N == config["N"] else "_control")
        write_csv(os.path.join(out_dir, f"kin_{suffix}.csv"),
                  ["x", "rho", "Omega0", "Omega1"],
                  [(x[i], rho_k[i], om_k[i, 0], om_k[i, 1]) for i in range(M)],
                  config)
    write_json(os.path.join(out_dir, "report.json"),
               {"table": [asdict(r_) for r_ in report.rows],
                "noise_floor": {"rho_l1": noise_rho, "angular": noise_ang},
                "gates": report.gates(),
                "coefficients": report.coefficients},
               config)
    return report


_RUNNERS = {
    "coeffs": run_coeffs,
    "gci": run_gci,
    "kinetic": run_kinetic,
    "spherefp": run_spherefp,
    "soh": run_soh,
    "compare": run_compare,
}


def run_scenario(config: RunConfig, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    return _RUNNERS[config.scenario](config, out_dir)
