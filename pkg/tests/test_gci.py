import math

import numpy as np
import pytest

from sohk.gci import (GciError, _assemble, chi_semianalytic_d2, compute_kd,
                      functional_J, gci_eval, gci_residual, solve_chi,
                      w_vector)
from sohk.spherequad import sphere_grid, theta_rule
from sohk.vmf import ModelParams, solve_concentration, vmf_moment_matrix, \
    VmfEquilibrium

# frozen by the two independent d=2 routes agreeing to ~1e-14 (and by
# resolution doubling for d=3); regression guards for the solver
KD_D2_02 = 0.6522587609107
KD_D3_02 = 0.5150784135908


class TestSolveChi:
    def test_d2_routes_agree(self, chi_d2):
        c = np.cos(np.linspace(0, math.pi, 513))
        ora = chi_semianalytic_d2(chi_d2.l, 0.2, 1.0, c)
        assert np.abs(chi_d2.chi(c) - ora).max() < 1e-6

    def test_boundary_values_exact(self, chi_d2, chi_d3):
        for chi in (chi_d2, chi_d3):
            assert chi.chi(np.array([-1.0, 1.0])) == pytest.approx([0.0, 0.0],
                                                                   abs=1e-300)

    def test_j_negative(self, chi_d2, chi_d3):
        assert chi_d2.j_value < 0
        assert chi_d3.j_value < 0

    def test_linearity_in_load(self, chi_d2):
        A, b, _ = _assemble(2, chi_d2.l, 0.2, 1.0, 24)
        one = np.linalg.solve(A, b)
        three = np.linalg.solve(A, 3.0 * b)
        assert np.allclose(three, 3.0 * one, rtol=1e-12)

    def test_rejects_supercritical(self):
        with pytest.raises(GciError):
            solve_chi(2, 1.0, 0.5, 1.0)
        with pytest.raises(GciError):
            solve_chi(3, 1.0, 0.4, 1.0)

    def test_rejects_wrong_l(self):
        with pytest.raises(GciError):
            solve_chi(2, 3.0, 0.2, 1.0)

    def test_d4_solves(self):
        p = ModelParams(d=4, r=1.0, beta=1.0, sigma=0.15)
        lst = solve_concentration(p)
        chi = solve_chi(4, lst, 0.15, 1.0, resolution=32)
        assert chi.k_d > 0


class TestKd:
    def test_frozen_reference_values(self, chi_d2, chi_d3):
        assert chi_d2.k_d == pytest.approx(KD_D2_02, abs=1e-8)
        assert chi_d3.k_d == pytest.approx(KD_D3_02, abs=1e-8)

    def test_scale_invariance(self, chi_d2):
        doubled = chi_d2.with_coefficients(2.0 * chi_d2.coefficients)
        assert compute_kd(doubled) == pytest.approx(chi_d2.k_d, rel=1e-14)

    def test_quadrature_stability(self, chi_d2):
        assert abs(compute_kd(chi_d2, nq=300) - compute_kd(chi_d2, nq=600)) < 1e-12

    def test_resolution_stability(self):
        for d in (2, 3):
            p = ModelParams(d=d, r=1.0, beta=1.0, sigma=0.2)
            lst = solve_concentration(p)
            a = solve_chi(d, lst, 0.2, 1.0, resolution=24).k_d
            b = solve_chi(d, lst, 0.2, 1.0, resolution=48).k_d
            assert abs(a - b) < 1e-8

    @pytest.mark.parametrize("d", [2, 3])
    @pytest.mark.parametrize("sor", [0.05, 0.1, 0.2])
    def test_sign_positive(self, d, sor):
        p = ModelParams(d=d, r=1.0, beta=1.0, sigma=sor)
        lst = solve_concentration(p)
        chi = solve_chi(d, lst, sor, 1.0, resolution=40)
        assert chi.k_d > 0
        assert abs(chi.k_d) < 1.0


class TestFunctional:
    def test_zero_function(self, chi_d2):
        rule = theta_rule(2, 200)
        val = functional_J(lambda c: np.zeros_like(c), 2, chi_d2.l, 0.2, 1.0,
                           rule, h_prime=lambda c: np.zeros_like(c))
        assert val == 0.0

    def test_quadratic_structure(self, chi_d3):
        # J(t h) = a t^2 - b t: three samples determine the parabola exactly
        rule = theta_rule(3, 300)
        h = lambda c: (1 - c ** 2) * (1 + 0.5 * c)
        hp = lambda c: -2 * c * (1 + 0.5 * c) + 0.5 * (1 - c ** 2)
        J = {t: functional_J(lambda c: t * h(c), 3, chi_d3.l, 0.2, 1.0, rule,
                             h_prime=lambda c: t * hp(c)) for t in (1.0, 2.0, 3.0)}
        a = (J[3.0] - 2 * J[2.0] + J[1.0]) / 2
        b = a - J[1.0]
        assert a > 0
        assert J[2.0] == pytest.approx(a * 4 - b * 2, rel=1e-10)

    def test_matches_discrete_j_at_solution(self, chi_d2):
        rule = theta_rule(2, 400)
        val = functional_J(chi_d2.chi, 2, chi_d2.l, 0.2, 1.0, rule,
                           h_prime=chi_d2.chi_prime)
        assert val == pytest.approx(chi_d2.j_value, rel=1e-10)

    @pytest.mark.parametrize("d", [2, 3])
    def test_minimality_and_stationarity(self, d, chi_d2, chi_d3, rng):
        chi = chi_d2 if d == 2 else chi_d3
        rule = theta_rule(d, 400)
        n = chi.resolution
        Jmin = functional_J(chi.chi, d, chi.l, 0.2, 1.0, rule,
                            h_prime=chi.chi_prime)
        for _ in range(20):
            db = rng.standard_normal(n)
            db /= np.linalg.norm(db)

            def perturbed(t):
                return chi.with_coefficients(chi.coefficients + t * db)

            plus = perturbed(1e-4)
            assert Jmin <= functional_J(plus.chi, d, chi.l, 0.2, 1.0, rule,
                                        h_prime=plus.chi_prime) + 1e-12
            # centered directional derivative vanishes at the minimizer
            minus = perturbed(-1e-4)
            dd = (functional_J(plus.chi, d, chi.l, 0.2, 1.0, rule,
                               h_prime=plus.chi_prime)
                  - functional_J(minus.chi, d, chi.l, 0.2, 1.0, rule,
                                 h_prime=minus.chi_prime)) / (2e-4)
            assert abs(dd) < 1e-8 * max(1.0, abs(Jmin))


class TestPsiEvaluation:
    def test_orthogonal_w_gives_zero(self, chi_d3):
        Om = np.array([0.0, 0.0, 1.0])
        W = np.array([1.0, 0.0, 0.0])
        omega = np.array([0.0, 0.9, math.sqrt(1 - 0.81)])  # omega.W = 0
        assert gci_eval(omega, W, chi_d3, Om) == pytest.approx(0.0, abs=1e-14)

    def test_pole_values_vanish(self, chi_d3):
        Om = np.array([0.0, 0.0, 1.0])
        W = np.array([1.0, 0.0, 0.0])
        assert gci_eval(Om, W, chi_d3, Om) == 0.0
        assert gci_eval(-Om, W, chi_d3, Om) == 0.0

    def test_rejects_non_orthogonal_w(self, chi_d3):
        Om = np.array([0.0, 0.0, 1.0])
        with pytest.raises(GciError):
            gci_eval(np.array([1.0, 0, 0]), Om, chi_d3, Om)

    def test_rotation_equivariance(self, chi_d3, rng):
        # psi_W(O omega) = psi_{O^T W}(omega) for rotations fixing the axis
        Om = np.array([0.0, 0.0, 1.0])
        for _ in range(100):
            ang = rng.uniform(0, 2 * math.pi)
            O = np.array([[math.cos(ang), -math.sin(ang), 0.0],
                          [math.sin(ang), math.cos(ang), 0.0],
                          [0.0, 0.0, 1.0]])
            W = np.array([rng.standard_normal(), rng.standard_normal(), 0.0])
            v = rng.standard_normal(3)
            omega = v / np.linalg.norm(v)
            lhs = gci_eval(O @ omega, W, chi_d3, Om)
            rhs = gci_eval(omega, O.T @ W, chi_d3, Om)
            assert abs(lhs - rhs) < 1e-10

    def test_d2_oddness(self, chi_d2):
        Om = np.array([1.0, 0.0])
        E = np.array([0.0, 1.0])
        for th in (0.3, 1.2, 2.9):
            wp = np.array([math.cos(th), math.sin(th)])
            wm = np.array([math.cos(-th), math.sin(-th)])
            assert gci_eval(wp, E, chi_d2, Om) == pytest.approx(
                -gci_eval(wm, E, chi_d2, Om), rel=1e-12)

    def test_basis_independence(self, chi_d3, rng):
        # F(omega) = sum_i psi_{E_i} E_i is the same for any orthonormal
        # basis of the orthogonal complement of the axis
        Om = np.array([0.0, 0.0, 1.0])
        ang = 0.7718
        E1 = np.array([1.0, 0.0, 0.0])
        E2 = np.array([0.0, 1.0, 0.0])
        F1 = np.array([math.cos(ang), math.sin(ang), 0.0])
        F2 = np.array([-math.sin(ang), math.cos(ang), 0.0])
        for _ in range(20):
            v = rng.standard_normal(3)
            omega = v / np.linalg.norm(v)
            va = (gci_eval(omega, E1, chi_d3, Om) * E1
                  + gci_eval(omega, E2, chi_d3, Om) * E2)
            vb = (gci_eval(omega, F1, chi_d3, Om) * F1
                  + gci_eval(omega, F2, chi_d3, Om) * F2)
            assert np.abs(va - vb).max() < 1e-10


class TestResidualAndW:
    def test_constant_invariant_trivially_solves(self, chi_d3):
        # psi == 1: gradient and laplacian vanish and W[1] = 0, so the
        # residual of the invariant equation is identically zero
        grid = sphere_grid(3, 1.0, 10)
        from sohk.spherequad import FD_STEP, fd_gradient, fd_laplacian
        psi = lambda v: 1.0
        grads = np.array([fd_gradient(psi, p, FD_STEP) for p in grid.nodes])
        W = (grid.weights / grid.area)[None, :] @ grads
        assert np.abs(W).max() == 0.0

    def test_w_vector_in_transverse_eigenspace(self, chi_d3):
        grid = sphere_grid(3, 1.0, 32)
        Om = np.array([0.0, 0.0, 1.0])
        W = w_vector(chi_d3, grid, Omega=Om)
        assert abs(W @ Om) < 1e-8
        p = ModelParams(d=3, r=1.0, beta=1.0, sigma=0.2)
        eq = VmfEquilibrium(params=p, rho=1.0, l=chi_d3.l, Omega=Om)
        M = vmf_moment_matrix(eq)
        assert np.linalg.norm((M - 0.2 * np.eye(3)) @ W) < 1e-6 * np.linalg.norm(W)

    def test_residual_decreases_under_refinement_d2(self):
        p = ModelParams(d=2, r=1.0, beta=1.0, sigma=0.2)
        lst = solve_concentration(p)
        grid = sphere_grid(2, 1.0, 512)
        res = [gci_residual(solve_chi(2, lst, 0.2, 1.0, resolution=n,
                                      check_refinement=False), grid)
               for n in (8, 16, 32)]
        assert res[0] > res[1] > res[2]
        assert res[2] < 1e-9

    def test_residual_decreases_under_refinement_d3(self):
        p = ModelParams(d=3, r=1.0, beta=1.0, sigma=0.2)
        lst = solve_concentration(p)
        grid = sphere_grid(3, 1.0, 16)
        res = [gci_residual(solve_chi(3, lst, 0.2, 1.0, resolution=n,
                                      check_refinement=False), grid)
               for n in (8, 16)]
        assert res[0] > res[1]

    @pytest.mark.parametrize("d", [2, 3])
    def test_perturbed_chi_much_worse(self, d, chi_d2, chi_d3):
        chi = chi_d2 if d == 2 else chi_d3
        grid = sphere_grid(d, 1.0, 512 if d == 2 else 16)
        clean = gci_residual(chi, grid)
        dirty = gci_residual(chi, grid, chi_extra=lambda c: 0.1 * (1 - c ** 2))
        assert dirty > 10 * clean
