"""The velocity-average operator on weighted particle ensembles.

The operator projects a velocity measure onto the sphere of radius r along
rays from the origin, keeping any mass sitting exactly at v = 0.  Mass is
preserved exactly (weights are never touched) and the operator is idempotent:
samples already supported on {0} union r*S^(d-1) pass through unchanged,
bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spherequad import FD_STEP, fd_gradient

# velocities within this relative distance of 0 or of the sphere are treated
# as exactly there; makes repeated averaging a bitwise no-op
_SNAP_TOL = 1e-12


class AveragingError(ValueError):
    pass


@dataclass(frozen=True)
class WeightedSamples:
    """Velocity samples v_i in R^d with nonnegative weights w_i."""

    v: np.ndarray   # (N, d)
    w: np.ndarray   # (N,)

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if v.ndim != 2 or w.shape != (v.shape[0],):
            raise AveragingError("v must be (N, d) and w must be (N,)")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(w))):
            raise AveragingError("samples must be finite")
        if np.any(w < 0):
            raise AveragingError("weights must be >= 0")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "w", w)

    @property
    def total_weight(self) -> float:
        return float(self.w.sum())


def average_samples(samples: WeightedSamples, r: float) -> WeightedSamples:
    """Project each nonzero velocity to r * v/|v|; keep mass at v = 0.

    Weights are passed through untouched, so mass conservation is exact.
    Velocities already within 1e-12*r of {0} or of the sphere are returned
    unchanged, which makes the operator exactly idempotent.
    """
    if r <= 0:
        raise AveragingError(f"r must be positive, got {r}")
    norms = np.linalg.norm(samples.v, axis=1)
    at_rest = norms <= _SNAP_TOL * r
    on_sphere = np.abs(norms - r) <= _SNAP_TOL * r
    keep = at_rest | on_sphere
    out = samples.v.copy()
    move = ~keep
    out[move] = r * samples.v[move] / norms[move, None]
    return WeightedSamples(v=out, w=samples.w)


def check_idempotence(samples: WeightedSamples, r: float) -> bool:
    """True iff averaging returns sphere/origin-supported input bit for bit.

    Rejects inputs whose speeds are not already in {0, r} (within 1e-12
    relative); checking those is the whole point of the operation.
    """
    norms = np.linalg.norm(samples.v, axis=1)
    ok = (norms <= _SNAP_TOL * r) | (np.abs(norms - r) <= 1e-12 * r)
    if not np.all(ok):
        raise AveragingError(
            "input not supported on {0} union rS^(d-1); "
            f"worst |v| = {norms[~ok][0]:.17g}")
    averaged = average_samples(samples, r)
    return (np.array_equal(averaged.v, samples.v)
            and np.array_equal(averaged.w, samples.w))


def check_elimination(samples: WeightedSamples, r: float, beta: float,
                      test_functions) -> float:
    """Residual of the averaging of a propulsion/friction divergence.

    For smooth test functions psi_tilde on the sphere, the average of
    div_v{F (alpha - beta |v|^2) v} pairs to
    sum_i w_i (alpha - beta |v_i|^2) v_i . grad_v[psi_tilde(r v/|v|)](v_i),
    which vanishes because the extension's gradient is tangential while the
    field is radial.  Gradients are 4th-order central differences; returns
    the max |residual| over the test functions, normalized by total weight.
    """
    alpha = beta * r ** 2
    norms = np.linalg.norm(samples.v, axis=1)
    active = norms > _SNAP_TOL * r   # the field vanishes at v = 0 anyway
    h = FD_STEP * r
    worst = 0.0
    for psi in test_functions:

        def ext(v, _psi=psi):
            return _psi(r * v / np.linalg.norm(v))

        total = 0.0
        for vi, wi, ni in zip(samples.v[active], samples.w[active],
                              norms[active]):
            g = fd_gradient(ext, vi, h)
            total += wi * (alpha - beta * ni ** 2) * float(vi @ g)
        scale = max(samples.total_weight, 1e-300)
        worst = max(worst, abs(total) / scale)
    return worst
