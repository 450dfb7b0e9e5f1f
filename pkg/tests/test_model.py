import math

import numpy as np
import pytest

from cbi2.mat2 import Vec2, expm
from cbi2.model import (
    ModelError,
    ModelParams,
    NonErgodicError,
    StepTooLargeError,
    conditional_mean,
    conditional_variance,
    eta_matrices,
    mean_coefficients,
    phi,
    solve_riccati,
    stationary_laplace,
    transition_laplace,
)
from cbi2.simulate import SimConfig, exact_diagonal_transition, terminal_states

from cir_oracle import (
    cir_mean,
    cir_stationary_laplace,
    cir_transition_laplace,
    cir_variance,
)
from conftest import assert_vec_close


class TestModelParams:
    @pytest.mark.parametrize(
        "field,value",
        [
            ("a1", 0.0), ("a2", -1.0), ("b11", 0.0), ("b22", -0.5),
            ("b12", -0.1), ("b21", -1e-9), ("sigma1", 0.0), ("sigma2", -2.0),
        ],
    )
    def test_sign_constraints(self, field, value):
        kwargs = dict(a1=1, a2=1, b11=1, b12=0.2, b21=0.3, b22=1, sigma1=1, sigma2=1)
        kwargs[field] = value
        with pytest.raises(ModelError):
            ModelParams(**kwargs)

    def test_kappa_and_ergodicity_flag(self, coupled_params):
        assert coupled_params.kappa() == pytest.approx(0.06)
        assert coupled_params.is_ergodic
        critical = ModelParams(1, 1, 1, 2.0, 0.5, 1, 1, 1)  # kappa = 1
        assert not critical.is_ergodic  # construction allowed, just flagged

    def test_reversion_rates(self, coupled_params):
        lo, hi = coupled_params.reversion_rates()
        assert lo == pytest.approx(1.0 - math.sqrt(0.06), abs=1e-14)
        assert hi == pytest.approx(1.0 + math.sqrt(0.06), abs=1e-14)

    def test_theta_roundtrip(self, coupled_params):
        assert ModelParams.from_theta(coupled_params.as_theta()) == coupled_params


class TestPhi:
    def test_vanishes_at_zero(self, coupled_params):
        assert phi(coupled_params, Vec2.zero()) == Vec2.zero()

    def test_diagonal_hand_value(self, diagonal_params):
        # b*l + sigma^2 l^2 / 2 with everything 1: 1 + 0.5 per coordinate
        assert_vec_close(phi(diagonal_params, Vec2(1.0, 1.0)), [1.5, 1.5])

    def test_unit_vector_exposes_adjoint_coupling(self, coupled_params):
        # first slot sees b11 + sigma1^2/2; second slot feeds back through -b12
        got = phi(coupled_params, Vec2(1.0, 0.0))
        assert_vec_close(got, [1.0 + 0.5 * 0.25, -0.2])


def linear_flow(params: ModelParams, lam: Vec2, t: float) -> np.ndarray:
    """Oracle: e^{-B^T t} lam, the sigma -> 0 limit of the exponent flow."""
    return expm((-t) * params.reversion_matrix().transpose()).to_array() @ lam.to_array()


class TestRiccati:
    def test_zero_is_fixed_point(self, coupled_params):
        sol = solve_riccati(coupled_params, Vec2.zero(), 5.0, 0.01)
        assert np.all(sol.values == 0.0)

    def test_small_sigma_matches_linear_flow(self):
        params = ModelParams(1, 1, 1, 0.2, 0.3, 1, 1e-6, 1e-6)
        lam = Vec2(0.7, 1.3)
        sol = solve_riccati(params, lam, 3.0, 0.005)
        np.testing.assert_allclose(
            sol.values[-1], linear_flow(params, lam, 3.0), rtol=0, atol=1e-9
        )

    def test_halving_dt_is_stable(self, coupled_params):
        lam = Vec2(1.0, 1.0)
        coarse = solve_riccati(coupled_params, lam, 4.0, 0.02).values[-1]
        fine = solve_riccati(coupled_params, lam, 4.0, 0.01).values[-1]
        assert np.max(np.abs(coarse - fine)) < 1e-8 * max(1.0, np.max(np.abs(fine)))

    def test_values_stay_nonnegative(self, coupled_params):
        sol = solve_riccati(coupled_params, Vec2(2.0, 0.0), 10.0, 0.01)
        assert sol.values.min() >= 0.0

    def test_dominated_by_linear_flow(self, coupled_params):
        lam = Vec2(1.0, 1.0)
        sol = solve_riccati(coupled_params, lam, 8.0, 0.01)
        for idx in range(0, len(sol.times), 20):
            bound = linear_flow(coupled_params, lam, float(sol.times[idx]))
            assert np.all(sol.values[idx] <= bound + 1e-8)

    def test_decay_rate_matches_slowest_eigenvalue(self, coupled_params):
        sol = solve_riccati(coupled_params, Vec2(1.0, 1.0), 12.0, 0.005)
        mask = sol.times >= 5.0
        t = sol.times[mask]
        log_norm = np.log(np.sqrt((sol.values[mask] ** 2).sum(axis=1)))
        rate = -np.polyfit(t, log_norm, 1)[0]
        xi_min = coupled_params.reversion_rates()[0]
        assert abs(rate - xi_min) < 0.05 * xi_min

    def test_step_too_large(self):
        params = ModelParams(1, 1, 1, 0, 0, 1, 1, 3.0)
        with pytest.raises(StepTooLargeError):
            solve_riccati(params, Vec2(0.0, 50.0), 2.0, 1.0)

    def test_rejects_negative_lam(self, coupled_params):
        with pytest.raises(ModelError):
            solve_riccati(coupled_params, Vec2(-0.1, 0.0), 1.0, 0.01)


class TestTransitionLaplace:
    def test_total_mass(self, coupled_params):
        assert transition_laplace(coupled_params, Vec2(3.0, 0.5), Vec2.zero(), 2.0) == 1.0

    def test_time_zero(self, coupled_params):
        x, lam = Vec2(1.0, 2.0), Vec2(0.4, 0.1)
        assert transition_laplace(coupled_params, x, lam, 0.0) == math.exp(-x.dot(lam))

    def test_diagonal_factorizes_into_scalar_oracle(self, diagonal_params):
        x, lam, t = Vec2(0.5, 2.0), Vec2(0.8, 0.3), 1.0
        expected = cir_transition_laplace(
            x.v1, 1, 1, 1, t, lam.v1
        ) * cir_transition_laplace(x.v2, 1, 1, 1, t, lam.v2)
        got = transition_laplace(diagonal_params, x, lam, t)
        assert got == pytest.approx(expected, abs=1e-6)

    def test_flow_property(self, coupled_params):
        # v_{s+t}(lam) = v_s(v_t(lam))
        lam = Vec2(0.4, 0.9)
        v_t = solve_riccati(coupled_params, lam, 0.5, 1e-3).final()
        left = solve_riccati(coupled_params, lam, 1.2, 1e-3).final()
        right = solve_riccati(coupled_params, v_t, 0.7, 1e-3).final()
        assert_vec_close(left, right.to_array(), rtol=0, atol=1e-7)

    def test_in_unit_interval(self, coupled_params):
        value = transition_laplace(coupled_params, Vec2(1.0, 1.0), Vec2(2.0, 3.0), 0.7)
        assert 0.0 < value <= 1.0


class TestStationaryLaplace:
    def test_total_mass(self, coupled_params):
        assert stationary_laplace(coupled_params, Vec2.zero()) == 1.0

    def test_monotone_in_each_component(self, coupled_params):
        base = stationary_laplace(coupled_params, Vec2(0.5, 0.5))
        assert stationary_laplace(coupled_params, Vec2(0.9, 0.5)) <= base
        assert stationary_laplace(coupled_params, Vec2(0.5, 0.9)) <= base

    def test_diagonal_matches_gamma_law(self, diagonal_params):
        lam = Vec2(1.0, 0.4)
        expected = cir_stationary_laplace(1, 1, 1, lam.v1) * cir_stationary_laplace(
            1, 1, 1, lam.v2
        )
        got = stationary_laplace(diagonal_params, lam)
        assert got == pytest.approx(expected, abs=1e-8)

    def test_equals_large_time_transition(self, coupled_params):
        lam = Vec2(0.3, 0.7)
        x = Vec2(2.0, 0.5)
        t = 40.0 / coupled_params.reversion_rates()[0]
        limit = transition_laplace(coupled_params, x, lam, t, dt=0.02)
        assert stationary_laplace(coupled_params, lam) == pytest.approx(limit, abs=1e-6)

    def test_non_ergodic_raises(self):
        params = ModelParams(1, 1, 1, 2.0, 0.6, 1, 1, 1)  # kappa = 1.2
        with pytest.raises(NonErgodicError):
            stationary_laplace(params, Vec2(0.5, 0.5))


class TestConditionalMean:
    def test_time_zero(self, coupled_params):
        x = Vec2(1.5, 0.25)
        assert conditional_mean(coupled_params, x, 0.0) == x

    def test_long_run_level(self, coupled_params):
        # B^{-1} A = (1.2, 1.3)/0.94 by the adjugate oracle
        got = conditional_mean(coupled_params, Vec2(5.0, 0.1), 40.0)
        assert_vec_close(got, [1.2 / 0.94, 1.3 / 0.94], rtol=1e-12)
        assert got.v1 == pytest.approx(1.27660, abs=1e-5)
        assert got.v2 == pytest.approx(1.38298, abs=1e-5)

    def test_diagonal_scalar_oracle(self, diagonal_params):
        x, t = Vec2(0.3, 2.2), 0.7
        got = conditional_mean(diagonal_params, x, t)
        assert got.v1 == pytest.approx(cir_mean(x.v1, 1, 1, 1, t), rel=1e-12)
        assert got.v2 == pytest.approx(cir_mean(x.v2, 1, 1, 1, t), rel=1e-12)

    def test_one_step_regression_identity(self, coupled_params):
        # same formula, two code paths: must agree exactly
        x, delta = Vec2(0.8, 1.7), 1.0
        rho, gamma = mean_coefficients(
            coupled_params.drift_vector(), coupled_params.reversion_matrix(), delta
        )
        assert conditional_mean(coupled_params, x, delta) == gamma @ x + rho


class TestEta:
    def test_total_trace_positive(self, coupled_params):
        eta1, eta2 = eta_matrices(coupled_params, Vec2(0.0, 0.0), 1.0)
        assert (eta1 + eta2).trace() > 0.0

    def test_diagonal_closed_form(self, diagonal_params):
        x = Vec2(1.5, 0.7)
        eta1, eta2 = eta_matrices(diagonal_params, x, 1.0)
        # scalar conditional variance divided by sigma^2 (= 1 here)
        assert eta1.m11 == pytest.approx(cir_variance(x.v1, 1, 1, 1, 1.0), abs=1e-9)
        assert eta2.m22 == pytest.approx(cir_variance(x.v2, 1, 1, 1, 1.0), abs=1e-9)
        assert (eta1.m12, eta1.m21, eta1.m22) == (0.0, 0.0, 0.0)
        assert (eta2.m11, eta2.m12, eta2.m21) == (0.0, 0.0, 0.0)

    def test_affine_in_state(self, coupled_params):
        x = Vec2(0.9, 1.4)
        eta1_0 = eta_matrices(coupled_params, Vec2.zero(), 1.0)[0]
        eta1_x = eta_matrices(coupled_params, x, 1.0)[0]
        eta1_2x = eta_matrices(coupled_params, 2.0 * x, 1.0)[0]
        left = (eta1_2x - eta1_0).to_array()
        right = 2.0 * (eta1_x - eta1_0).to_array()
        np.testing.assert_allclose(left, right, rtol=0, atol=1e-12)

    def test_symmetric_psd(self, coupled_params):
        eta1, eta2 = eta_matrices(coupled_params, Vec2(1.2, 0.8), 1.0)
        for eta in (eta1, eta2):
            a = eta.to_array()
            assert a[0, 1] == a[1, 0]
            assert np.all(np.linalg.eigvalsh(a) >= -1e-14)


class TestConditionalVariance:
    def test_diagonal_reference_value(self, diagonal_params):
        got = conditional_variance(diagonal_params, Vec2(1.0, 1.0), 1.0)
        expected = (math.exp(-1) - math.exp(-2)) + (1 - math.exp(-1)) ** 2 / 2
        assert got.m11 == pytest.approx(expected, abs=1e-9)
        assert got.m22 == pytest.approx(expected, abs=1e-9)
        assert got.m11 == pytest.approx(0.432332, abs=1e-5)
        assert (got.m12, got.m21) == (0.0, 0.0)

    def test_exact_sampler_monte_carlo(self, diagonal_params):
        x, delta, n = Vec2(1.3, 0.6), 1.0, 100_000
        rng = np.random.default_rng(20240811)
        draws = exact_diagonal_transition(
            diagonal_params, np.tile([x.v1, x.v2], (n, 1)), delta, rng
        )
        emp = np.cov(draws.T)
        want = conditional_variance(diagonal_params, x, delta).to_array()
        for i in range(2):
            for j in range(2):
                se = math.sqrt((want[i, i] * want[j, j] + want[i, j] ** 2) / n)
                assert abs(emp[i, j] - want[i, j]) < 3.0 * se

    @pytest.mark.slow
    def test_euler_monte_carlo_coupled(self, coupled_params):
        x, delta, n = Vec2(1.2, 0.8), 1.0, 30_000
        cfg = SimConfig(
            params=coupled_params, euler_dt=1e-3, delta=delta, n_obs=1,
            burn_in=0.0, x0=x, seed=7,
        )
        draws = terminal_states(cfg, delta, n, method="euler")
        emp = np.cov(draws.T)
        want = conditional_variance(coupled_params, x, delta).to_array()
        for i in range(2):
            for j in range(2):
                se = math.sqrt((want[i, i] * want[j, j] + want[i, j] ** 2) / n)
                # 3 SE plus a little room for the O(dt) scheme bias
                assert abs(emp[i, j] - want[i, j]) < 4.0 * se
