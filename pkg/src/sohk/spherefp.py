"""Space-homogeneous Fokker-Planck dynamics on the velocity sphere.

    df/dt + div_omega{ f (I - omega x omega / r^2) u[f] } = sigma_eff lap_omega f

with u[f] the mean velocity of f and sigma_eff = sigma / epsilon (epsilon
only rescales time here; the default is 1).

Discretizations: d=2 uses Fourier modes of f(theta) on the circle of radius
r; d=3 uses Legendre modes of the axisymmetric profile F(c), c the cosine of
the angle to the symmetry axis.  Diffusion is applied exactly in modal space
(the Laplace-Beltrami eigenvalues are -k^2/r^2 and -k(k+1)/r^2), the drift
explicitly with a midpoint rule and 3/2-rule dealiasing; the zeroth mode is
untouched by both, so mass is conserved exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numpy.polynomial import legendre as npleg

from .vmf import ModelParams, VmfEquilibrium


class SphereFpError(ValueError):
    pass


@dataclass(frozen=True)
class AngularDensity:
    """Modal density on the sphere of radius r.

    d=2: ``coeffs`` are rfft coefficients of f(theta) (density per arclength)
    sampled on 3*nmodes uniform angles.  d=3: ``coeffs`` are Legendre
    coefficients of F(c), the axisymmetric density per domega; the axis is
    implicit (everything is written in the c variable).
    """

    d: int
    r: float
    nmodes: int
    coeffs: np.ndarray

    def __post_init__(self):
        if self.d not in (2, 3):
            raise SphereFpError(f"d must be 2 or 3, got {self.d}")

    # -- construction ------------------------------------------------------

    @staticmethod
    def from_angular_function(d: int, r: float, nmodes: int, func) -> "AngularDensity":
        """d=2: func(theta) >= 0 on [0, 2pi); d=3: func(c) on [-1, 1]."""
        if d == 2:
            ng = 3 * nmodes
            th = 2.0 * math.pi * np.arange(ng) / ng
            fh = np.fft.rfft(np.asarray(func(th), dtype=float))
            fh[nmodes + 1:] = 0.0
            return AngularDensity(d=2, r=r, nmodes=nmodes, coeffs=fh)
        c, w = np.polynomial.legendre.leggauss(2 * nmodes)
        vals = np.asarray(func(c), dtype=float)
        a = np.array([(2 * k + 1) / 2.0 * float(w @ (vals * npleg.legval(c, _unit(k))))
                      for k in range(nmodes)])
        return AngularDensity(d=3, r=r, nmodes=nmodes, coeffs=a)

    @staticmethod
    def uniform(d: int, r: float, nmodes: int, mass: float = 1.0) -> "AngularDensity":
        from .spherequad import unit_sphere_area
        area = unit_sphere_area(d) * r ** (d - 1)
        if d == 2:
            return AngularDensity.from_angular_function(
                2, r, nmodes, lambda th: np.full_like(th, mass / area))
        return AngularDensity.from_angular_function(
            3, r, nmodes, lambda c: np.full_like(c, mass / area))

    @staticmethod
    def from_equilibrium(eq: VmfEquilibrium, nmodes: int) -> "AngularDensity":
        """Project a von Mises-Fisher state (axis-aligned representation)."""
        from .vmf import beta0
        p = eq.params
        if p.d == 2:
            z = eq.normalization

            def f(th):
                return eq.rho * np.exp(eq.l * np.cos(th)) / z

            return AngularDensity.from_angular_function(2, p.r, nmodes, f)
        z = eq.normalization

        def F(c):
            return eq.rho * np.exp(eq.l * c) / z

        return AngularDensity.from_angular_function(3, p.r, nmodes, F)

    # -- observables -------------------------------------------------------

    @property
    def mass(self) -> float:
        if self.d == 2:
            ng = 3 * self.nmodes
            return float(self.coeffs[0].real) / ng * 2.0 * math.pi * self.r
        # int F(c) domega = 2 pi r^2 int F dc = 2 pi r^2 * 2 a0
        return 4.0 * math.pi * self.r ** 2 * float(self.coeffs[0])

    def mean_velocity_magnitude(self) -> float:
        """|u[f]| (the direction is along the implicit axis for d=3)."""
        if self.d == 2:
            ng = 3 * self.nmodes
            f = np.fft.irfft(self.coeffs, n=ng)
            th = 2.0 * math.pi * np.arange(ng) / ng
            mass = f.sum() * (2 * math.pi / ng) * self.r
            ux = float((f * np.cos(th)).sum()) * (2 * math.pi / ng) * self.r ** 2
            uy = float((f * np.sin(th)).sum()) * (2 * math.pi / ng) * self.r ** 2
            return math.hypot(ux, uy) / mass
        a = self.coeffs
        if a[0] == 0:
            return 0.0
        # <c> = int c F dc / int F dc = (2/3 a1) / (2 a0)
        return abs(self.r * (a[1] / 3.0) / a[0])

    def grid_values(self):
        """(abscissa, values): theta grid for d=2, Gauss c grid for d=3."""
        if self.d == 2:
            ng = 3 * self.nmodes
            th = 2.0 * math.pi * np.arange(ng) / ng
            return th, np.fft.irfft(self.coeffs, n=ng)
        c, _ = np.polynomial.legendre.leggauss(2 * self.nmodes)
        return c, npleg.legval(c, self.coeffs)


def _unit(k: int) -> np.ndarray:
    e = np.zeros(k + 1)
    e[k] = 1.0
    return e


def _trunc(a: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n)
    m = min(len(a), n)
    out[:m] = a[:m]
    return out


def evolve(f: AngularDensity, params: ModelParams, dt: float,
           steps: int) -> AngularDensity:
    """Advance the density; Strang (exact diffusion / explicit drift).

    Rejects dt above the explicit-part stability estimate
    dt <= eps * r / (|u| * bandwidth).
    """
    if dt <= 0:
        raise SphereFpError(f"dt must be positive, got {dt}")
    sig = params.sigma / params.epsilon
    inv_eps = 1.0 / params.epsilon
    if f.d == 2:
        return _evolve_circle(f, params.epsilon, sig, inv_eps, dt, steps)
    return _evolve_axisym(f, params.epsilon, sig, inv_eps, dt, steps)


def _check_dt(dt: float, eps: float, r: float, u: float, nmodes: int):
    if u > 0 and dt > eps * r / (u * nmodes):
        raise SphereFpError(
            f"dt={dt} violates the drift stability bound "
            f"{eps * r / (u * nmodes):.3e} at |u|={u:.3e}")


def _evolve_circle(f: AngularDensity, eps: float, sig: float, inv_eps: float,
                   dt: float, steps: int) -> AngularDensity:
    n = f.nmodes
    ng = 3 * n                      # 3/2-rule dealiasing
    th = 2.0 * math.pi * np.arange(ng) / ng
    cth, sth = np.cos(th), np.sin(th)
    fh = f.coeffs.copy()
    k = np.arange(fh.size)
    keep = k <= n
    fh[~keep] = 0.0
    r = f.r
    half_diff = np.exp(-sig * k ** 2 / r ** 2 * (dt / 2.0))

    def drift_rhs(fhat):
        g = np.fft.irfft(fhat, n=ng)
        mass = g.sum()
        ux = float((g * cth).sum()) * r / max(mass, 1e-300)
        uy = float((g * sth).sum()) * r / max(mass, 1e-300)
        utau = (-ux * sth + uy * cth) * inv_eps
        flux = np.fft.rfft(g * utau)
        flux[~keep] = 0.0
        return -(1j * k / r) * flux

    for _ in range(steps):
        # |u| read off the first mode; guards the explicit drift step
        _check_dt(dt, eps, r, r * abs(fh[1]) / max(fh[0].real, 1e-300), n)
        fh = fh * half_diff
        k1 = drift_rhs(fh)
        k2 = drift_rhs(fh + 0.5 * dt * k1)
        fh = fh + dt * k2
        fh[~keep] = 0.0
        fh = fh * half_diff
    return replace(f, coeffs=fh)


def _evolve_axisym(f: AngularDensity, eps: float, sig: float, inv_eps: float,
                   dt: float, steps: int) -> AngularDensity:
    n = f.nmodes
    r = f.r
    k = np.arange(n)
    half_diff = np.exp(-sig * k * (k + 1) / r ** 2 * (dt / 2.0))

    def u_of(a):
        return (r * (a[1] / 3.0) / a[0]) if a[0] != 0 else 0.0

    def drift_rhs(a):
        # -(u/r) d/dc[(1-c^2) F]; the bracket keeps the boundary flux zero,
        # so the zeroth Legendre mode is exactly preserved
        u = u_of(a) * inv_eps
        csqF = npleg.legmulx(npleg.legmulx(a))
        g = npleg.legsub(a, csqF)
        return _trunc(npleg.legmul([-u / r], npleg.legder(g)), n)

    a = _trunc(f.coeffs, n)
    for _ in range(steps):
        _check_dt(dt, eps, r, abs(u_of(a)), n)
        a = a * half_diff
        k1 = drift_rhs(a)
        k2 = drift_rhs(_trunc(npleg.legadd(a, 0.5 * dt * k1), n))
        a = _trunc(npleg.legadd(a, dt * k2), n)
        a = a * half_diff
    return replace(f, coeffs=a)


def stationary_l(f: AngularDensity, params: ModelParams) -> float:
    """Estimated concentration l_hat = r |u[f]| / sigma."""
    if f.mass <= 0:
        raise SphereFpError("density must have positive mass")
    return f.r * f.mean_velocity_magnitude() / params.sigma
