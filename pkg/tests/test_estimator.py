import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mimo_spatia import covmodel, estimator
from mimo_spatia.estimator import PilotScenario


def ula(M, r, theta_deg, f=None):
    return covmodel.exponential_ula(M, r, math.radians(theta_deg), 1.0, f)


def two_ue(M=32, r=0.5, snr=(10.0, 0.0), angles=(30.0, -150.0)):
    return PilotScenario.from_snr([(ula(M, r, angles[0]), snr[0]), (ula(M, r, angles[1]), snr[1])])


class TestScenario:
    def test_dimension_mismatch(self):
        with pytest.raises(estimator.ScenarioError):
            PilotScenario((np.eye(3), np.eye(4)))

    def test_empty(self):
        with pytest.raises(estimator.ScenarioError):
            PilotScenario(())

    def test_bad_target(self):
        with pytest.raises(estimator.ScenarioError):
            PilotScenario((np.eye(2),), target_index=1)

    def test_from_snr_scales_by_snr_over_beta(self):
        cov = covmodel.exponential_ula(3, 0.5, 0.0, beta=4.0)
        s = PilotScenario.from_snr([(cov, 10.0)])
        np.testing.assert_allclose(s.target, 10 * cov.R / 4.0)
        assert s.snr_db == (10.0,)

    def test_observation_at_least_identity(self):
        Q = two_ue().observation_covariance()
        assert np.linalg.eigvalsh(Q - np.eye(32)).min() >= -1e-9


class TestClosedForm:
    @pytest.mark.parametrize("snr_i,expected", [(10.0, 11 / 21), (0.0, 1 / 6), (-10.0, 1.1 / 11.1)])
    def test_identity_covariance_pair(self, snr_i, expected):
        s = PilotScenario.from_snr([(covmodel.uncorrelated(100), 10.0), (covmodel.uncorrelated(100), snr_i)])
        assert estimator.nmse(estimator.build_quantities(s)) == pytest.approx(expected, rel=1e-14)
        assert estimator.scenario_nmse(s) == pytest.approx(expected, rel=1e-14)

    def test_single_ue_scalar_formula(self):
        s = PilotScenario.from_snr([(covmodel.uncorrelated(10, 3.0), 10.0)])
        assert estimator.nmse(estimator.build_quantities(s)) == pytest.approx(1 / 11, rel=1e-14)

    def test_high_snr_limit(self):
        s = PilotScenario.from_snr([(ula(16, 0.5, 10.0), 60.0)])
        assert estimator.scenario_nmse(s) <= 1e-5

    def test_no_pilot_power(self):
        # a silent co-pilot UE yields a zero estimate for itself
        q = estimator.build_quantities(PilotScenario((np.eye(4), np.zeros((4, 4)))), target_index=1)
        np.testing.assert_array_equal(q.Psi, 0)
        # zero effective SNR on the target: estimate vanishes and NMSE is 1
        s = PilotScenario.from_snr([(np.eye(4), -400.0)])
        assert estimator.scenario_nmse(s) == pytest.approx(1.0, abs=1e-12)

    def test_strong_correlation_beats_uncorrelated(self):
        s = PilotScenario.from_snr([(ula(100, 0.999, 30.0), 10.0)])
        assert estimator.scenario_nmse(s) <= 0.1 * (1 / 11)

    def test_filter_definition(self):
        s = two_ue(M=8)
        q = estimator.build_quantities(s)
        np.testing.assert_allclose(q.W @ q.Q, s.target, atol=1e-12)
        np.testing.assert_allclose(q.Psi, q.W @ q.Q @ q.W.conj().T, atol=1e-12)

    def test_decomposition_psd(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            R1 = ula(24, 0.6, rng.uniform(-180, 180), rng.normal(0, 4, 24))
            R2 = ula(24, 0.6, rng.uniform(-180, 180), rng.normal(0, 4, 24))
            s = PilotScenario.from_snr([(R1, 10.0), (R2, 0.0)])
            q = estimator.build_quantities(s)
            assert np.linalg.norm(q.Psi + q.C - q.R) <= 1e-9 * np.linalg.norm(q.R)
            tol = -1e-9 * np.trace(q.R).real / 24
            assert np.linalg.eigvalsh(q.Psi).min() >= tol
            assert np.linalg.eigvalsh(q.C).min() >= tol

    def test_nmse_monotone_in_snr(self):
        R = ula(32, 0.5, 30.0)
        Ri = ula(32, 0.5, -60.0)
        vals = [estimator.scenario_nmse(PilotScenario.from_snr([(R, snr), (Ri, 0.0)]))
                for snr in np.linspace(-10, 30, 20)]
        assert np.all(np.diff(vals) <= 1e-15)

    @settings(max_examples=30, deadline=None)
    @given(r=st.floats(0, 0.99), sigma=st.floats(0, 8), snr_t=st.floats(-20, 30), snr_i=st.floats(-20, 30),
           seed=st.integers(0, 2**31))
    def test_nmse_in_unit_interval(self, r, sigma, snr_t, snr_i, seed):
        rng = np.random.default_rng(seed)
        spec = covmodel.CorrelationModelSpec("ULA", 12, r=r, sigma_db=sigma, theta=rng.uniform(-3, 3))
        spec_i = covmodel.CorrelationModelSpec("ULA", 12, r=r, sigma_db=sigma, theta=rng.uniform(-3, 3))
        s = PilotScenario.from_snr([(covmodel.build_covariance(spec, rng), snr_t),
                                    (covmodel.build_covariance(spec_i, rng), snr_i)])
        v = estimator.nmse(estimator.build_quantities(s))
        assert -1e-12 <= v <= 1 + 1e-12
        assert v == pytest.approx(estimator.scenario_nmse(s), abs=1e-10)

    def test_pair_helpers_agree(self):
        s = two_ue(M=20)
        Rt, Ri = s.covariances
        nt, ni, c = estimator.nmse_and_coefficient(Rt, Ri)
        assert nt == pytest.approx(estimator.scenario_nmse(s, 0), rel=1e-12)
        assert ni == pytest.approx(estimator.scenario_nmse(s, 1), rel=1e-12)
        assert c == pytest.approx(estimator.correlation_coefficient(s, 0, 1), rel=1e-12)
        assert estimator.nmse_pair(Rt, Ri) == pytest.approx(nt, rel=1e-12)
        assert estimator.nmse_pair(Rt, None) == pytest.approx(
            estimator.scenario_nmse(PilotScenario((Rt,))), rel=1e-12)

    def test_pair_helpers_leave_inputs_untouched(self):
        s = two_ue(M=6)
        Rt, Ri = s.covariances[0].copy(), s.covariances[1].copy()
        estimator.nmse_and_coefficient(Rt, Ri)
        estimator.nmse_pair(Rt, None)
        np.testing.assert_array_equal(Rt, s.covariances[0])
        np.testing.assert_array_equal(Ri, s.covariances[1])


class TestCoefficient:
    @pytest.mark.parametrize("M", [1, 4, 64])
    def test_identity_covariances(self, M):
        s = PilotScenario.from_snr([(covmodel.uncorrelated(M), 10.0), (covmodel.uncorrelated(M, 7.0), -5.0)])
        assert estimator.correlation_coefficient(s, 0, 1) == pytest.approx(1.0, rel=1e-14)

    def test_single_antenna(self):
        s = PilotScenario.from_snr([(ula(1, 0.5, 10.0), 3.0), (ula(1, 0.9, -40.0), 8.0)])
        assert estimator.correlation_coefficient(s, 0, 1) == pytest.approx(1.0, rel=1e-14)

    def test_symmetric(self):
        s = two_ue(M=16)
        assert estimator.correlation_coefficient(s, 0, 1) == pytest.approx(
            estimator.correlation_coefficient(s, 1, 0), rel=1e-13)

    def test_scale_invariance_with_q_fixed(self):
        s = two_ue(M=16)
        L = estimator.linalg.cholesky(s.observation_covariance())
        Ra, Rb = s.covariances
        base = estimator._coefficient(L, Ra, Rb)
        assert estimator._coefficient(L, 3.7 * Ra, Rb) == pytest.approx(base, rel=1e-13)

    def test_same_ue_rejected(self):
        with pytest.raises(estimator.ScenarioError):
            estimator.correlation_coefficient(two_ue(M=4), 0, 0)

    def test_larger_array_decorrelates(self):
        coefs = [estimator.correlation_coefficient(two_ue(M=M, snr=(10.0, 10.0), angles=(30.0, -40.0)), 0, 1)
                 for M in (10, 100)]
        assert coefs[1] < coefs[0] < 1


class TestMonteCarlo:
    def test_noise_free_single_identity(self):
        s = PilotScenario((np.eye(3, dtype=complex),))
        out = estimator.simulate_pilot_phase(s, np.random.default_rng(0), 5, noise=False)
        np.testing.assert_allclose(out.estimates[0], out.channels[0] / 2, atol=1e-15)

    def test_empirical_nmse_two_ue(self):
        s = two_ue(M=32)
        out = estimator.simulate_pilot_phase(s, np.random.default_rng(1), 100_000)
        assert estimator.empirical_nmse(out, 0) == pytest.approx(estimator.scenario_nmse(s), rel=0.02)

    def test_estimate_covariance_is_psi(self):
        s = two_ue(M=8)
        out = estimator.simulate_pilot_phase(s, np.random.default_rng(2), 200_000)
        Psi = estimator.build_quantities(s).Psi
        g = out.estimates[0]
        emp = g @ g.conj().T / g.shape[1]
        assert np.max(np.abs(emp - Psi)) <= 0.03 * np.max(np.abs(Psi))

    def test_coefficient_matches_monte_carlo(self):
        s = PilotScenario.from_snr([(ula(64, 0.5, 30.0), 10.0), (ula(64, 0.5, -150.0), 0.0)])
        closed = estimator.correlation_coefficient(s, 0, 1)
        assert closed < 1
        out = estimator.simulate_pilot_phase(s, np.random.default_rng(3), 100_000)
        assert estimator.empirical_coefficient(out, 0, 1) == pytest.approx(closed, rel=0.02)

    def test_orthogonality_principle(self):
        s = PilotScenario((np.eye(8, dtype=complex),))
        out = estimator.simulate_pilot_phase(s, np.random.default_rng(4), 100_000)
        assert estimator.orthogonality_check(out) <= 0.03

    def test_orthogonality_negative_control(self):
        s = PilotScenario((np.eye(8, dtype=complex),))
        W = estimator.build_quantities(s).W
        out = estimator.simulate_pilot_phase(s, np.random.default_rng(4), 100_000, filters=[1.1 * W])
        assert estimator.orthogonality_check(out) > 0.03

    def test_orthogonality_analytic_zero(self):
        q = estimator.build_quantities(two_ue(M=8))
        # E{g_hat g_err^H} = W Q W^H ... = Psi - Psi
        cross = q.W @ q.R - q.W @ q.Q @ q.W.conj().T
        assert np.max(np.abs(cross)) <= 1e-12

    def test_orthogonality_needs_trials(self):
        s = PilotScenario((np.eye(2, dtype=complex),))
        out = estimator.simulate_pilot_phase(s, np.random.default_rng(0), 1)
        with pytest.raises(ValueError):
            estimator.orthogonality_check(out)
