"""Kinetic alignment dynamics on the velocity sphere and their fluid limit.

Subpackages by layer: quadrature and sphere-calculus checks (spherequad),
the equilibrium family and its concentration fixed point (vmf), generalized
collision invariants and the convection coefficient (gci), the velocity
average operator (averaging), the stiff particle simulator (kinetic), a
spectral Fokker-Planck validator on the sphere (spherefp), the limit
hydrodynamic solver (soh) and the batch harness/CLI (harness, cli).
"""

__version__ = "0.1.0"

from .vmf import (ModelParams, VmfEquilibrium, beta0, lambda_of_l, mu_of_l,
                  sample_vmf, solve_concentration, vmf_density,
                  vmf_moment_matrix)
from .gci import ChiSolution, compute_kd, functional_J, gci_eval, solve_chi
from .spherequad import SphereGrid, ThetaRule, sphere_grid, theta_rule

__all__ = [
    "__version__",
    "ModelParams", "VmfEquilibrium", "beta0", "lambda_of_l", "mu_of_l",
    "sample_vmf", "solve_concentration", "vmf_density", "vmf_moment_matrix",
    "ChiSolution", "compute_kd", "functional_J", "gci_eval", "solve_chi",
    "SphereGrid", "ThetaRule", "sphere_grid", "theta_rule",
]
