"""Finite-volume solver for the limiting hydrodynamic system.

    d rho/dt + div_x( rho c1 Omega ) = 0,               c1 = l sigma / r
    d Omega/dt + k_d r (Omega.grad) Omega
               + (r/l) (I - Omega x Omega) grad rho / rho = 0,   |Omega| = 1

on a periodic box in 1 or 2 space dimensions, with the orientation living in
R^d (d = 2 or 3).  Density uses a first-order Rusanov flux; the orientation
update is non-conservative with upwinded convection and centered pressure
gradients, followed by exact renormalization of Omega, which propagates the
unit constraint structurally.

The model divides by rho, so a vacuum guard aborts the run when the density
collapses below 1e-12 of its mean anywhere; silently regularizing would mask
a modeling breakdown.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

_CFL_LIMIT = 0.45
_VACUUM_REL = 1e-12


class SohError(ValueError):
    pass


class VacuumError(SohError):
    """Density fell below the vacuum guard; the pressure term 1/rho blows up."""


class CflError(SohError):
    pass


@dataclass(frozen=True)
class SohState:
    """Cell-averaged density and unit orientation on a periodic grid.

    rho has shape (m1,) or (m1, m2); Omega appends the orientation dimension.
    c1 is the mass-flux speed l*sigma/r, kdr the convection speed k_d*r and
    r_over_l the pressure coefficient r/l, all taken from the equilibrium
    and collision-invariant computations.
    """

    lengths: tuple[float, ...]
    rho: np.ndarray
    Omega: np.ndarray
    c1: float
    kdr: float
    r_over_l: float

    def __post_init__(self):
        d_x = self.rho.ndim
        if d_x not in (1, 2):
            raise SohError("spatial dimension must be 1 or 2")
        if len(self.lengths) != d_x:
            raise SohError("lengths must match the grid dimension")
        if self.Omega.shape[:d_x] != self.rho.shape or self.Omega.ndim != d_x + 1:
            raise SohError("Omega must be rho.shape + (d,)")
        if np.any(self.rho < 0):
            raise SohError("rho must be nonnegative")

    @property
    def d_x(self) -> int:
        return self.rho.ndim

    @property
    def dx(self) -> tuple[float, ...]:
        return tuple(L / m for L, m in zip(self.lengths, self.rho.shape))

    @property
    def cell_volume(self) -> float:
        return math.prod(self.dx)

    @property
    def total_mass(self) -> float:
        return float(self.rho.sum()) * self.cell_volume

    def max_signal_speed(self) -> float:
        # the rho-Omega coupling supports sound-like waves of speed
        # sqrt(c1 * r/l) (= sqrt(sigma)) transverse to Omega
        return max(self.c1, self.kdr, math.sqrt(self.c1 * self.r_over_l))

    def cfl_dt(self, cfl: float = 0.4) -> float:
        return cfl * min(self.dx) / self.max_signal_speed()


def renormalize(Omega: np.ndarray) -> np.ndarray:
    return Omega / np.linalg.norm(Omega, axis=-1, keepdims=True)


def _upwind_derivative(field: np.ndarray, speed: np.ndarray, axis: int,
                       dx: float) -> np.ndarray:
    back = (field - np.roll(field, 1, axis=axis)) / dx
    fwd = (np.roll(field, -1, axis=axis) - field) / dx
    sel = speed > 0
    if field.ndim > speed.ndim:
        sel = sel[..., None]
    return np.where(sel, back, fwd)


def soh_step(state: SohState, dt: float) -> SohState:
    """One forward-Euler finite-volume step; enforces CFL and vacuum guards."""
    if dt <= 0:
        raise SohError(f"dt must be positive, got {dt}")
    cfl = dt * state.max_signal_speed() / min(state.dx)
    if cfl > _CFL_LIMIT + 1e-12:
        raise CflError(f"CFL number {cfl:.3f} exceeds {_CFL_LIMIT}")
    rho, Om = state.rho, state.Omega
    mean_rho = float(rho.mean())
    if np.any(rho < _VACUUM_REL * mean_rho):
        raise VacuumError(
            f"density {rho.min():.3e} below vacuum guard "
            f"{_VACUUM_REL * mean_rho:.3e}")

    d_x = state.d_x
    dxs = state.dx
    c1 = state.c1

    # conservative density update: Rusanov flux per direction
    rho_new = rho.copy()
    for ax in range(d_x):
        omx = Om[..., ax]
        f = c1 * rho * omx
        a = c1 * np.maximum(np.abs(omx), np.abs(np.roll(omx, -1, axis=ax)))
        flux = 0.5 * (f + np.roll(f, -1, axis=ax)) \
            - 0.5 * a * (np.roll(rho, -1, axis=ax) - rho)
        rho_new -= dt / dxs[ax] * (flux - np.roll(flux, 1, axis=ax))

    # orientation: upwinded convection + centered projected pressure term
    conv = np.zeros_like(Om)
    grad_rho = []
    for ax in range(d_x):
        conv += Om[..., ax][..., None] * _upwind_derivative(
            Om, Om[..., ax], ax, dxs[ax])
        grad_rho.append((np.roll(rho, -1, axis=ax) - np.roll(rho, 1, axis=ax))
                        / (2 * dxs[ax]))
    # (I - Omega x Omega) applied to grad rho / rho, embedded into R^d
    g = np.zeros_like(Om)
    for ax in range(d_x):
        g[..., ax] = grad_rho[ax] / rho
    g -= np.sum(g * Om, axis=-1, keepdims=True) * Om
    Om_new = Om - dt * (state.kdr * conv + state.r_over_l * g)
    Om_new = renormalize(Om_new)
    return replace(state, rho=rho_new, Omega=Om_new)


def run(state: SohState, T: float, cfl: float = 0.4,
        callback=None) -> SohState:
    """Advance to time T with the CFL-limited step size."""
    if T <= 0:
        raise SohError(f"T must be positive, got {T}")
    dt = state.cfl_dt(cfl)
    nsteps = max(1, int(math.ceil(T / dt)))
    dt = T / nsteps
    t = 0.0
    for _ in range(nsteps):
        state = soh_step(state, dt)
        t += dt
        if callback is not None:
            callback(t, state)
    return state


def linear_wave_speeds(rho0: float, state_template: SohState,
                       background_angle: float = 0.0,
                       fd_step: float = 1e-7):
    """Characteristic speeds of the 1D linearization about a uniform state.

    The (rho, angle) system along x reads  dU/dt + A(U) dU/dx = 0  with
    U = (rho, phi); A is assembled by finite differences of the quasilinear
    fluxes and its eigenvalues are returned together with is_real flags
    (the system can lose hyperbolicity for some coefficients).
    """
    c1, kdr, rl = state_template.c1, state_template.kdr, state_template.r_over_l

    def flux_rho(rho, phi):
        return c1 * rho * math.cos(phi)

    # the phi equation is d phi/dt + kdr cos(phi) d phi/dx
    #                     - (r/l) sin(phi)/rho  d rho/dx = 0
    def row_phi(rho, phi):
        return np.array([-rl * math.sin(phi) / rho, kdr * math.cos(phi)])

    h = fd_step
    df_drho = (flux_rho(rho0 + h, background_angle)
               - flux_rho(rho0 - h, background_angle)) / (2 * h)
    df_dphi = (flux_rho(rho0, background_angle + h)
               - flux_rho(rho0, background_angle - h)) / (2 * h)
    A = np.array([[df_drho, df_dphi], row_phi(rho0, background_angle)])
    eig = np.linalg.eigvals(A)
    is_real = np.abs(eig.imag) <= 1e-9 * np.maximum(np.abs(eig.real), 1.0)
    return eig, is_real
