"""The standard figure set rendered from harness outputs.

Figures consume only the emitted CSV/JSON files and never recompute model
quantities.  Output is SVG with a fixed hash salt and stripped date metadata,
so re-rendering identical inputs is byte-identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .io import InputError, find_inputs, read_csv, read_json, require_columns

plt.rcParams.update({
    "svg.hashsalt": "sohk-figs",
    "figure.figsize": (5.0, 3.4),
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
})

_SAVEKW = {"metadata": {"Date": None}, "bbox_inches": "tight"}


@dataclass(frozen=True)
class FigureSpec:
    figure_id: str
    description: str
    inputs: tuple[str, ...]
    output: str


SPECS = {
    "F1": FigureSpec("F1", "order-parameter curves with the fixed-point chord",
                     ("curve.csv", "coeffs.json"), "f1_lambda_mu.svg"),
    "F2": FigureSpec("F2", "order parameter versus noise ratio",
                     ("coeffs.csv", "coeffs.json"), "f2_transition.svg"),
    "F3": FigureSpec("F3", "chi profiles", ("chi_*.csv",), "f3_chi.svg"),
    "F4": FigureSpec("F4", "convection coefficient sweep",
                     ("kd_sweep.csv",), "f4_kd.svg"),
    "F5": FigureSpec("F5", "kinetic speed-histogram evolution",
                     ("speed_hist.csv",), "f5_speed_hist.svg"),
    "F6": FigureSpec("F6", "sphere Fokker-Planck relaxation",
                     ("series.csv",), "f6_relaxation.svg"),
    "F7": FigureSpec("F7", "kinetic versus limit-model comparison",
                     ("report.json", "soh_final.csv", "kin_eps*.csv"),
                     "f7_compare.svg"),
}


def _save(fig, out_dir, name):
    path = Path(out_dir) / name
    fig.savefig(path, **_SAVEKW)
    plt.close(fig)
    return path


def render_f1(found, out_dir):
    path = found["curve.csv"][0]
    header, cols = read_csv(path)
    require_columns(path, cols, ["l", "lambda_l", "mu_l"])
    meta = read_json(found["coeffs.json"][0])
    sor = meta["reference_sigma_over_r2"]
    lstar = meta["reference_l_star"]
    fig, ax = plt.subplots()
    ax.plot(cols["l"], cols["lambda_l"], label=r"$\lambda(\ell)$")
    ax.plot(cols["l"], cols["mu_l"], "--", label=r"$\mu(\ell)$")
    ax.plot(cols["l"], sor * cols["l"], ":",
            label=rf"$({sor:g})\,\ell$")
    if lstar > 0:
        ax.axvline(lstar, color="k", lw=0.8, alpha=0.6)
        ax.annotate(rf"$\ell^*={lstar:.3f}$", (lstar, 0.05),
                    textcoords="offset points", xytext=(4, 0))
    ax.set_xlabel(r"concentration $\ell$")
    ax.set_ylabel("order parameter")
    ax.legend()
    return _save(fig, out_dir, SPECS["F1"].output)


def render_f2(found, out_dir):
    path = found["coeffs.csv"][0]
    header, cols = read_csv(path)
    require_columns(path, cols, ["sigma_over_r2", "order_parameter"])
    meta = read_json(found["coeffs.json"][0])
    fig, ax = plt.subplots()
    order = np.argsort(cols["sigma_over_r2"])
    ax.plot(cols["sigma_over_r2"][order], cols["order_parameter"][order],
            "o-")
    ax.axvline(meta["critical_ratio"], color="k", lw=0.8, alpha=0.6,
               label=rf"$1/d = {meta['critical_ratio']:g}$")
    ax.set_xlabel(r"$\sigma/r^2$")
    ax.set_ylabel(r"$\lambda(\ell^*)$")
    ax.legend()
    return _save(fig, out_dir, SPECS["F2"].output)


def render_f3(found, out_dir):
    fig, ax = plt.subplots()
    for path in found["chi_*.csv"]:
        header, cols = read_csv(path)
        require_columns(path, cols, ["c", "chi"])
        label = Path(path).stem.replace("chi_", "").replace("_", " ")
        ax.plot(cols["c"], cols["chi"], label=label)
    ax.set_xlabel(r"$c$")
    ax.set_ylabel(r"$\chi(c)$")
    ax.legend(fontsize=7)
    return _save(fig, out_dir, SPECS["F3"].output)


def render_f4(found, out_dir):
    path = found["kd_sweep.csv"][0]
    header, cols = read_csv(path)
    require_columns(path, cols, ["d", "sigma_over_r2", "k_d"])
    fig, ax = plt.subplots()
    for d in sorted(set(cols["d"])):
        sel = cols["d"] == d
        order = np.argsort(cols["sigma_over_r2"][sel])
        ax.plot(cols["sigma_over_r2"][sel][order], cols["k_d"][sel][order],
                "o-", label=f"d = {int(d)}")
    ax.set_xlabel(r"$\sigma/r^2$")
    ax.set_ylabel(r"$k_d$")
    ax.legend()
    return _save(fig, out_dir, SPECS["F4"].output)


def render_f5(found, out_dir):
    path = found["speed_hist.csv"][0]
    header, cols = read_csv(path)
    require_columns(path, cols, ["t", "speed", "density"])
    times = sorted(set(cols["t"]))
    fig, ax = plt.subplots()
    cmap = plt.get_cmap("viridis")
    for i, t in enumerate(times):
        sel = cols["t"] == t
        ax.plot(cols["speed"][sel], cols["density"][sel],
                color=cmap(i / max(len(times) - 1, 1)), label=f"t = {t:g}")
    ax.set_xlabel("speed")
    ax.set_ylabel("density")
    ax.legend(fontsize=7)
    return _save(fig, out_dir, SPECS["F5"].output)


def render_f6(found, out_dir):
    fig, ax = plt.subplots()
    for path in found["series.csv"]:
        header, cols = read_csv(path)
        require_columns(path, cols, ["t", "u_over_r"])
        ax.plot(cols["t"], cols["u_over_r"],
                label=Path(path).parent.name)
    ax.set_xlabel("t")
    ax.set_ylabel(r"$|u|/r$")
    ax.legend(fontsize=7)
    return _save(fig, out_dir, SPECS["F6"].output)


def render_f7(found, out_dir):
    report = read_json(found["report.json"][0])
    soh_path = found["soh_final.csv"][0]
    _, soh = read_csv(soh_path)
    require_columns(soh_path, soh, ["x", "rho", "Omega0", "Omega1"])
    fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.2))
    ax_rho, ax_om, ax_err = axes
    ax_rho.plot(soh["x"], soh["rho"], "k-", label="limit model")
    ax_om.plot(soh["x"], np.degrees(np.arctan2(soh["Omega1"], soh["Omega0"])),
               "k-", label="limit model")
    for path in found["kin_eps*.csv"]:
        name = Path(path).stem.replace("kin_", "")
        if name.endswith("_control"):
            continue
        _, kin = read_csv(path)
        ax_rho.plot(kin["x"], kin["rho"], alpha=0.8, label=name)
        ax_om.plot(kin["x"],
                   np.degrees(np.arctan2(kin["Omega1"], kin["Omega0"])),
                   alpha=0.8, label=name)
    eps = [row["epsilon"] for row in report["table"]]
    l1 = [row["rho_l1"] for row in report["table"]]
    ang = [row["angular_error"] for row in report["table"]]
    ax_err.loglog(eps, l1, "o-", label=r"$L^1(\rho)$")
    ax_err.loglog(eps, ang, "s-", label="angular")
    nf = report.get("noise_floor") or {}
    if nf.get("rho_l1") is not None:
        ax_err.axhline(nf["rho_l1"], ls=":", color="C0", alpha=0.7)
    if nf.get("angular") is not None:
        ax_err.axhline(nf["angular"], ls=":", color="C1", alpha=0.7)
    ax_rho.set_xlabel("x"), ax_rho.set_ylabel(r"$\rho$")
    ax_om.set_xlabel("x"), ax_om.set_ylabel("orientation angle [deg]")
    ax_err.set_xlabel(r"$\varepsilon$"), ax_err.set_ylabel("error at T")
    for ax in axes:
        ax.legend(fontsize=6)
    fig.tight_layout()
    return _save(fig, out_dir, SPECS["F7"].output)


_RENDERERS = {
    "F1": render_f1, "F2": render_f2, "F3": render_f3, "F4": render_f4,
    "F5": render_f5, "F6": render_f6, "F7": render_f7,
}


def render(figure_ids, in_dir, out_dir):
    """Render the requested figures (list of ids or "all").

    Returns (rendered paths, {figure_id: error}); inputs are resolved by
    recursive glob below ``in_dir`` and never modified.
    """
    if figure_ids in ("all", None):
        figure_ids = sorted(SPECS)
    unknown = [f for f in figure_ids if f not in SPECS]
    if unknown:
        raise InputError(f"unknown figure ids: {', '.join(unknown)}")
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    rendered, errors = [], {}
    for fid in figure_ids:
        spec = SPECS[fid]
        try:
            found = find_inputs(in_dir, spec.inputs)
            rendered.append(_RENDERERS[fid](found, out_dir))
        except InputError as exc:
            errors[fid] = str(exc)
    return rendered, errors
