"""Von Mises-Fisher equilibrium theory on the velocity sphere.

The averaged alignment operator has equilibria of the form
rho * exp(l Omega.omega / r) / Z on the sphere of radius r, where the
concentration l solves the fixed point lambda(l) = (sigma/r^2) l with
lambda(l) = beta0'(l) / beta0(l) and
beta0(l) = (1/pi) int_0^pi exp(l cos t) sin^(d-2) t dt.

Nonzero solutions exist iff sigma/r^2 < 1/d; the mean velocity of the
equilibrium is u = (sigma l / r) Omega = r lambda(l) Omega.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .spherequad import theta_rule, unit_sphere_area

# fixed rule size: the integrand exp(l*c) is entire, so 200 Gauss nodes give
# geometric accuracy for every l <= 100 used here
_BETA0_NODES = 200
# treat sigma/r^2 >= 1/d - this as supercritical; the fixed point degenerates
# continuously to zero at the threshold
_CRITICAL_SLACK = 1e-14
_MAX_BRACKET_DOUBLINGS = 64


class VmfError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the kinetic model.

    alpha (self-propulsion) is always beta * r^2 so that propulsion and
    friction balance exactly at speed r.
    """

    d: int
    r: float
    beta: float
    sigma: float
    epsilon: float = 1.0

    def __post_init__(self):
        if self.d < 2:
            raise VmfError(f"d must be >= 2, got {self.d}")
        for name in ("r", "beta", "sigma", "epsilon"):
            if getattr(self, name) <= 0:
                raise VmfError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def alpha(self) -> float:
        return self.beta * self.r ** 2

    @property
    def sigma_over_r2(self) -> float:
        return self.sigma / self.r ** 2


@lru_cache(maxsize=None)
def _rule(d: int):
    return theta_rule(d, _BETA0_NODES)


def beta0(l: float, d: int) -> float:
    """(1/pi) int_0^pi exp(l cos t) sin^(d-2) t dt."""
    if d < 2:
        raise VmfError(f"d must be >= 2, got {d}")
    rule = _rule(d)
    return rule.integrate(np.exp(l * rule.nodes)) / math.pi


def beta0_moments(l: float, d: int) -> tuple[float, float, float]:
    """pi*beta0 and its first two l-derivatives (same quadrature)."""
    rule = _rule(d)
    e = np.exp(l * rule.nodes)
    w = rule.weights
    return float(w @ e), float(w @ (rule.nodes * e)), float(w @ (rule.nodes ** 2 * e))


def lambda_of_l(l: float, d: int) -> float:
    """Order parameter lambda(l) = beta0'(l)/beta0(l), in [0, 1)."""
    if l < 0:
        raise VmfError(f"l must be >= 0, got {l}")
    b0, b1, _ = beta0_moments(l, d)
    return b1 / b0


def mu_of_l(l: float, d: int) -> float:
    """Lower bound mu(l) = 2l / (sqrt(d^2+4l^2) + d) < lambda(l) for l > 0."""
    if l < 0:
        raise VmfError(f"l must be >= 0, got {l}")
    return 2.0 * l / (math.sqrt(d * d + 4.0 * l * l) + d)


def solve_concentration(params: ModelParams) -> float:
    """The unique l >= 0 with lambda(l) = (sigma/r^2) l.

    Returns 0 at or above the critical ratio sigma/r^2 = 1/d.  Below it,
    bisects on [l_mu, L] where l_mu is the root of mu(l) = (sigma/r^2) l
    (a valid lower bound since mu < lambda) and L is found by doubling.
    """
    d = params.d
    kappa = params.sigma_over_r2
    if kappa >= 1.0 / d - _CRITICAL_SLACK:
        return 0.0
    l_mu = math.sqrt(1.0 - d * kappa) / kappa

    def g(l):
        return lambda_of_l(l, d) - kappa * l

    hi = 2.0 * l_mu
    for _ in range(_MAX_BRACKET_DOUBLINGS):
        if g(hi) < 0:
            break
        hi *= 2.0
    else:
        raise VmfError("fixed-point bracket did not close after 64 doublings; "
                       "quadrature or parameters are inconsistent")
    return brentq(g, l_mu, hi, xtol=1e-14, rtol=8.9e-16)


@dataclass(frozen=True)
class VmfEquilibrium:
    """A von Mises-Fisher state (rho, l, Omega) on the sphere of radius r."""

    params: ModelParams
    rho: float
    l: float
    Omega: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.rho < 0:
            raise VmfError(f"rho must be >= 0, got {self.rho}")
        if self.l < 0:
            raise VmfError(f"l must be >= 0, got {self.l}")
        Om = np.asarray(self.Omega, dtype=float)
        if Om.shape != (self.params.d,):
            raise VmfError(f"Omega must be a unit vector in R^{self.params.d}")
        if abs(np.linalg.norm(Om) - 1.0) > 1e-14 * 10:
            raise VmfError("|Omega| must equal 1 to 1e-14")
        object.__setattr__(self, "Omega", Om)
        if self.l > 0:
            resid = abs(lambda_of_l(self.l, self.params.d)
                        - self.params.sigma_over_r2 * self.l)
            if resid > 1e-10:
                raise VmfError(
                    f"l={self.l} violates the fixed point: residual {resid:.2e}")

    @property
    def mean_velocity(self) -> np.ndarray:
        return (self.params.sigma * self.l / self.params.r) * self.Omega

    @property
    def normalization(self) -> float:
        """Z = int exp(l Omega.omega/r) domega over the sphere of radius r."""
        p = self.params
        return (unit_sphere_area(p.d - 1) * p.r ** (p.d - 1)
                * math.pi * beta0(self.l, p.d))


def vmf_density(omega, eq: VmfEquilibrium):
    """Density of the equilibrium at points omega on the sphere (mass rho)."""
    p = eq.params
    omega = np.asarray(omega, dtype=float)
    single = omega.ndim == 1
    pts = omega[None, :] if single else omega
    norms = np.linalg.norm(pts, axis=1)
    if np.any(np.abs(norms - p.r) > 1e-8 * p.r):
        raise VmfError("omega is not on the sphere of radius r")
    vals = eq.rho * np.exp(eq.l * (pts @ eq.Omega) / p.r) / eq.normalization
    return float(vals[0]) if single else vals


def vmf_moment_matrix(eq: VmfEquilibrium) -> np.ndarray:
    """Second moment int M(omega) (omega-u) x (omega-u) domega (mass 1).

    Axisymmetry reduces the matrix to a polar-angle quadrature:
    a Omega x Omega + b (I - Omega x Omega) with a = r^2 <c^2> - |u|^2 and
    b = r^2 (1 - <c^2>)/(d-1).  At the fixed point b equals sigma and the
    largest eigenvalue is sigma with eigenspace orthogonal to Omega.
    """
    p = eq.params
    if eq.l > 0:
        resid = abs(lambda_of_l(eq.l, p.d) - p.sigma_over_r2 * eq.l)
        if resid > 1e-10:
            raise VmfError(f"fixed-point violation in equilibrium: {resid:.2e}")
    b0, _, b2 = beta0_moments(eq.l, p.d)
    m2 = b2 / b0
    usq = float(eq.mean_velocity @ eq.mean_velocity)
    OO = np.outer(eq.Omega, eq.Omega)
    eye = np.eye(p.d)
    a = p.r ** 2 * m2 - usq
    b = p.r ** 2 * (1.0 - m2) / (p.d - 1)
    return a * OO + b * (eye - OO)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

_REJECTION_MAX_L = 5.0


def _sample_cos_rejection(l: float, d: int, n: int, rng) -> np.ndarray:
    """c-marginal by rejection: uniform-on-sphere proposal, accept e^{l(c-1)}."""
    out = np.empty(n)
    filled = 0
    while filled < n:
        m = max(2 * (n - filled), 64)
        g = rng.standard_normal((m, d))
        c = g[:, 0] / np.linalg.norm(g, axis=1)
        keep = rng.uniform(size=m) < np.exp(l * (c - 1.0))
        got = c[keep][: n - filled]
        out[filled: filled + got.size] = got
        filled += got.size
    return out


def _cos_quantile_spline(l: float, d: int):
    """Monotone inverse CDF of the polar angle for large l (density
    proportional to e^{l cos t} sin^(d-2) t on [0, pi])."""
    t = np.linspace(0.0, math.pi, 8193)
    # factor e^{-l} keeps the ordinates in range for large l
    pdf = np.exp(l * (np.cos(t) - 1.0)) * np.sin(t) ** (d - 2)
    cdf = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) / 2 * np.diff(t))])
    cdf /= cdf[-1]
    # strictly increasing subset for interpolation
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    return PchipInterpolator(cdf[keep], t[keep])


def sample_vmf(n: int, eq: VmfEquilibrium, seed: int) -> np.ndarray:
    """n i.i.d. draws from the equilibrium direction law, points on r*S^(d-1).

    Uniform-sphere rejection for l <= 5, monotone-spline inverse CDF of the
    polar angle above that.  Deterministic given the seed.
    """
    if n < 1:
        raise VmfError(f"n must be >= 1, got {n}")
    p = eq.params
    rng = np.random.default_rng(seed)
    d, r, l = p.d, p.r, eq.l
    if l == 0:
        g = rng.standard_normal((n, d))
        return r * g / np.linalg.norm(g, axis=1)[:, None]
    if l <= _REJECTION_MAX_L:
        c = _sample_cos_rejection(l, d, n, rng)
    else:
        q = _cos_quantile_spline(l, d)
        c = np.cos(q(rng.uniform(size=n)))
    # uniform transverse direction in the orthogonal complement of Omega
    g = rng.standard_normal((n, d))
    g -= np.outer(g @ eq.Omega, eq.Omega)
    g /= np.linalg.norm(g, axis=1)[:, None]
    pts = c[:, None] * eq.Omega[None, :] + np.sqrt(1.0 - c ** 2)[:, None] * g
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    return r * pts
