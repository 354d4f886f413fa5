"""Quadrature on spheres r*S^(d-1) and on the polar-angle interval.

Everything here works in the variable c = cos(theta): integrals of the form
int_0^pi g(cos theta) sin^(d-2)(theta) dtheta become int_-1^1 g(c) w(c) dc
with the weight w(c) = (1-c^2)^((d-3)/2).  That makes d=3 a plain
Gauss-Legendre rule and d=2 a Gauss-Chebyshev rule, both stable at the poles.

The module also provides numerical verifiers for the integration-by-parts
and radial-extension identities of sphere calculus that the rest of the
library leans on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.chebyshev import chebgauss
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi

EPS = np.finfo(float).eps
# step for 4th-order central differences of first derivatives; balances
# truncation O(h^4) against roundoff O(eps/h)
FD_STEP = EPS ** 0.2
# step for 4th-order second derivatives (roundoff is O(eps/h^2) there)
FD_STEP2 = EPS ** (1.0 / 6.0)


class QuadratureError(ValueError):
    pass


@dataclass(frozen=True)
class ThetaRule:
    """Gauss rule for int_-1^1 g(c) (1-c^2)^((d-3)/2) dc.

    Exact for polynomials g up to ``degree`` against the weight.
    """

    d: int
    nodes: np.ndarray
    weights: np.ndarray
    degree: int

    def integrate(self, values) -> float:
        return float(self.weights @ np.asarray(values))

    def apply(self, g) -> float:
        return float(self.weights @ g(self.nodes))


@dataclass(frozen=True)
class SphereGrid:
    """Quadrature nodes/weights on the sphere r*S^(d-1), d in {2, 3}.

    ``bandwidth`` is the largest spherical-harmonic degree (d=3) or Fourier
    mode (d=2) integrated to near machine precision.
    """

    d: int
    r: float
    nodes: np.ndarray       # (m, d), all |node| = r
    weights: np.ndarray     # (m,), sum = area of r*S^(d-1)
    bandwidth: int
    # d=2 only: uniform angles of the nodes, strictly increasing on [0, 2pi)
    angles: np.ndarray | None = field(default=None, repr=False)

    @property
    def area(self) -> float:
        return unit_sphere_area(self.d) * self.r ** (self.d - 1)

    def integrate(self, values) -> float | np.ndarray:
        values = np.asarray(values)
        return np.tensordot(self.weights, values, axes=(0, 0))


def unit_sphere_area(d: int) -> float:
    """Area of the unit sphere S^(d-1) in R^d (2pi for d=2, 4pi for d=3)."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def theta_weight_moment(k: int, d: int) -> float:
    """Exact int_-1^1 c^k (1-c^2)^((d-3)/2) dc;  zero for odd k."""
    if k % 2 == 1:
        return 0.0
    return math.exp(math.lgamma((k + 1) / 2) + math.lgamma((d - 1) / 2)
                    - math.lgamma((k + d) / 2))


def theta_rule(d: int, n: int) -> ThetaRule:
    """Gauss rule with n nodes for the polar-angle weight of dimension d."""
    if d < 2:
        raise QuadratureError(f"dimension must be >= 2, got {d}")
    if n < 2:
        raise QuadratureError(f"need at least 2 nodes, got {n}")
    if d == 2:
        c, w = chebgauss(n)
        # chebgauss returns nodes in decreasing order; keep increasing
        c, w = c[::-1].copy(), w[::-1].copy()
    elif d == 3:
        c, w = leggauss(n)
    else:
        a = (d - 3) / 2.0
        c, w = roots_jacobi(n, a, a)
    return ThetaRule(d=d, nodes=c, weights=w, degree=2 * n - 1)


def sphere_grid(d: int, r: float, resolution: int) -> SphereGrid:
    """Quadrature grid on r*S^(d-1).

    d=2: uniform (trapezoidal) angles, spectrally accurate for periodic
    integrands.  d=3: Gauss-Legendre in cos(theta) times uniform azimuth,
    exact for axisymmetric polynomial integrands.
    """
    if d not in (2, 3):
        raise QuadratureError(f"sphere grids support d in {{2, 3}}, got {d}")
    if r <= 0:
        raise QuadratureError(f"radius must be positive, got {r}")
    if d == 2:
        n = max(int(resolution), 4)
        th = 2.0 * math.pi * np.arange(n) / n
        nodes = r * np.stack([np.cos(th), np.sin(th)], axis=1)
        weights = np.full(n, 2.0 * math.pi * r / n)
        return SphereGrid(d=2, r=r, nodes=nodes, weights=weights,
                          bandwidth=n - 1, angles=th)
    nc = max(int(resolution), 4)
    nphi = 2 * nc
    c, wc = leggauss(nc)
    phi = 2.0 * math.pi * np.arange(nphi) / nphi
    cc, pp = np.meshgrid(c, phi, indexing="ij")
    s = np.sqrt(1.0 - cc ** 2)
    nodes = r * np.stack([s * np.cos(pp), s * np.sin(pp), cc],
                         axis=-1).reshape(-1, 3)
    weights = (np.outer(wc, np.full(nphi, 2.0 * math.pi / nphi))
               * r ** 2).ravel()
    return SphereGrid(d=3, r=r, nodes=nodes, weights=weights,
                      bandwidth=min(2 * nc - 1, nphi - 1))


# ---------------------------------------------------------------------------
# finite differences in the ambient space (4th-order central)
# ---------------------------------------------------------------------------

def fd_gradient(f, x: np.ndarray, h: float) -> np.ndarray:
    """4th-order central-difference gradient of a scalar field at x."""
    g = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        g[i] = (-f(x + 2 * e) + 8 * f(x + e)
                - 8 * f(x - e) + f(x - 2 * e)) / (12 * h)
    return g


def fd_jacobian(field, x: np.ndarray, h: float) -> np.ndarray:
    """4th-order Jacobian d(field_i)/d(x_j) of a vector field at x."""
    cols = []
    for j in range(x.size):
        e = np.zeros(x.size)
        e[j] = h
        cols.append((-np.asarray(field(x + 2 * e)) + 8 * np.asarray(field(x + e))
                     - 8 * np.asarray(field(x - e)) + np.asarray(field(x - 2 * e)))
                    / (12 * h))
    return np.stack(cols, axis=1)


def fd_laplacian(f, x: np.ndarray, h: float) -> float:
    """4th-order Laplacian of a scalar field at x."""
    f0 = f(x)
    total = 0.0
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        total += (-f(x + 2 * e) + 16 * f(x + e) - 30 * f0
                  + 16 * f(x - e) - f(x - 2 * e)) / (12 * h ** 2)
    return total


# ---------------------------------------------------------------------------
# identity verifiers (integration by parts on spheres, radial extensions)
# ---------------------------------------------------------------------------

@dataclass
class IdentityReport:
    """Residuals of the sphere-calculus identities at each tested radius.

    ident0: |lhs - rhs| of the divergence/surface-moment identity,
    ident1: |int div A domega| for tangential fields (0 in exact arithmetic),
    ident2: |int grad(chi).A + int chi div A| for tangential fields,
    extension_grad: mismatch between the ambient gradient of the radially
        constant extension at radius t and the scaled surface gradient,
    extension_div: same for divergences of tangential extensions.
    """

    t_values: list[float]
    ident0: list[float]
    tangential: bool
    ident1: list[float]
    ident2: list[float]
    extension_grad: float | None = None
    extension_div: float | None = None

    def max_residual(self) -> float:
        vals = self.ident0 + self.ident1 + self.ident2
        if self.extension_grad is not None:
            vals = vals + [self.extension_grad]
        if self.extension_div is not None:
            vals = vals + [self.extension_div]
        return max(vals) if vals else 0.0


def _scaled_grid(grid: SphereGrid, t: float):
    scale = t / grid.r
    return grid.nodes * scale, grid.weights * scale ** (grid.d - 1)


def verify_sphere_identities(field, grid: SphereGrid, t_values,
                             chi=None, surface_scalar=None,
                             annulus=None, fd_step=None) -> IdentityReport:
    """Numerically check the sphere integration-by-parts identities.

    ``field`` is an ambient C^1 vector field defined on an annulus covering
    ``t_values``; derivatives are taken by 4th-order central differences.
    For each radius t the divergence identity (surface integral of div A
    versus the moment form) is evaluated; when the field is tangential
    (A.v = 0 detected numerically) the vanishing of int div A domega and the
    pairing identity with ``chi`` are checked too.  If ``surface_scalar``
    (a function of the direction) is given, the gradient and divergence
    relations for its radially constant extension are verified at the
    t_values against scaled surface derivatives at radius r.
    """
    t_values = [float(t) for t in t_values]
    d = grid.d
    h = FD_STEP * grid.r if fd_step is None else float(fd_step)
    if annulus is not None:
        r1, r2 = annulus
        for t in t_values:
            if t - 2 * h < r1 or t + 2 * h > r2:
                raise QuadratureError(
                    f"radius {t} (with FD stencil) outside annulus {annulus}")

    ident0, ident1, ident2 = [], [], []
    tangential = True
    for t in t_values:
        pts, wts = _scaled_grid(grid, t)
        div_vals = np.empty(len(pts))
        moment_vals = np.empty(len(pts))
        tang_err = 0.0
        for i, p in enumerate(pts):
            J = fd_jacobian(field, p, h)
            A = np.asarray(field(p))
            div_vals[i] = np.trace(J)
            moment_vals[i] = (p @ J @ p) / t ** 2 + (d - 1) * (p @ A) / t ** 2
            tang_err = max(tang_err, abs(p @ A) / t)
        lhs = float(wts @ div_vals)
        rhs = float(wts @ moment_vals)
        ident0.append(abs(lhs - rhs))
        if tang_err > 1e-10 * max(1.0, float(np.abs(A).max())):
            tangential = False
        if tangential:
            ident1.append(abs(lhs))
            if chi is not None:
                pair = 0.0
                for i, p in enumerate(pts):
                    g = fd_gradient(chi, p, h)
                    pair += wts[i] * (g @ np.asarray(field(p))
                                      + chi(p) * div_vals[i])
                ident2.append(abs(pair))

    report = IdentityReport(t_values=t_values, ident0=ident0,
                            tangential=tangential, ident1=ident1,
                            ident2=ident2)
    if surface_scalar is not None:
        report.extension_grad = _extension_gradient_residual(
            surface_scalar, grid, t_values, h)
        report.extension_div = _extension_divergence_residual(
            surface_scalar, grid, t_values, h)
    return report


def _extension_gradient_residual(surface_scalar, grid, t_values, h):
    """statement 2 of the extension lemma: grad_v psi(omega_t) equals
    (r/t) times the surface gradient of psi at the projected point."""
    r = grid.r

    def ext(v):
        return surface_scalar(r * v / np.linalg.norm(v))

    worst = 0.0
    for t in t_values:
        pts, _ = _scaled_grid(grid, t)
        for p in pts[:: max(1, len(pts) // 32)]:
            g_t = fd_gradient(ext, p, h)
            base = r * p / t
            g_r = fd_gradient(ext, base, h)   # surface gradient at radius r
            worst = max(worst, float(np.abs(g_t - (r / t) * g_r).max()))
    return worst


def _extension_divergence_residual(surface_scalar, grid, t_values, h):
    """statement 4: div of a tangential radially-constant extension scales
    like r/t.  The tangential field used is the surface gradient of
    ``surface_scalar`` extended radially."""
    r = grid.r

    def ext_scalar(v):
        return surface_scalar(r * v / np.linalg.norm(v))

    def tangent_field(v):
        # grad of the radially constant extension is tangential by
        # construction; evaluating it at the projected point makes the
        # field itself radially constant
        w = r * v / np.linalg.norm(v)
        return fd_gradient(ext_scalar, w, FD_STEP * r)

    worst = 0.0
    for t in t_values:
        pts, _ = _scaled_grid(grid, t)
        for p in pts[:: max(1, len(pts) // 16)]:
            J = fd_jacobian(tangent_field, p, h)
            div_t = float(np.trace(J))
            base = r * p / t
            Jr = fd_jacobian(tangent_field, base, h)
            worst = max(worst, abs(div_t - (r / t) * np.trace(Jr)))
    return worst
