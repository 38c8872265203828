import numpy as np
import pytest

from spoofguard import (AttackSignal, GaussianSampler, PlantState,
                        SystemModel, measure_gps, measure_imu, sample_noise,
                        step_dynamics, validate_model)

from conftest import make_uav_model


class TestStepDynamics:
    def test_zero_fixed_point(self, uav_model):
        state = PlantState.initial(np.zeros(4))
        out = step_dynamics(uav_model, state, np.zeros(2), np.zeros(4))
        assert np.array_equal(out.x, np.zeros(4))
        assert out.k == 1

    def test_velocity_advances_position(self, uav_model):
        # A maps [0, 0, 1, 0] to [0.01, 0, 1, 0] at the 0.01 s sampling time.
        state = PlantState.initial([0.0, 0.0, 1.0, 0.0])
        out = step_dynamics(uav_model, state, np.zeros(2), np.zeros(4))
        np.testing.assert_allclose(out.x, [0.01, 0.0, 1.0, 0.0], atol=1e-15)

    def test_input_enters_velocity(self, uav_model):
        state = PlantState.initial(np.zeros(4))
        out = step_dynamics(uav_model, state, [1.0, 0.0], np.zeros(4))
        np.testing.assert_allclose(out.x, [0.0, 0.0, 0.01, 0.0], atol=1e-15)

    def test_tracks_previous_state(self, uav_model):
        state = PlantState.initial([1.0, 2.0, 3.0, 4.0])
        out = step_dynamics(uav_model, state, np.zeros(2), np.zeros(4))
        assert np.array_equal(out.x_prev, state.x)
        out2 = step_dynamics(uav_model, out, np.zeros(2), np.zeros(4))
        assert np.array_equal(out2.x_prev, out.x)

    def test_rejects_dimension_mismatch(self, uav_model):
        state = PlantState.initial(np.zeros(4))
        with pytest.raises(ValueError):
            step_dynamics(uav_model, state, np.zeros(3), np.zeros(4))
        with pytest.raises(ValueError):
            step_dynamics(uav_model, state, np.zeros(2), np.zeros(5))

    def test_noise_free_iteration_matches_matrix_power(self, uav_model):
        x0 = np.array([1.0, -2.0, 0.5, 0.25])
        state = PlantState.initial(x0)
        for _ in range(100):
            state = step_dynamics(uav_model, state, np.zeros(2), np.zeros(4))
        expected = np.linalg.matrix_power(uav_model.A, 100) @ x0
        np.testing.assert_allclose(state.x, expected, atol=1e-12)


class TestMeasurements:
    def test_gps_reads_position(self, uav_model):
        state = PlantState.initial([1.0, 2.0, 0.0, 0.0])
        y = measure_gps(uav_model, state, AttackSignal.none(), np.zeros(2))
        np.testing.assert_allclose(y, [1.0, 2.0])

    def test_gps_bias_injection(self, uav_model):
        state = PlantState.initial(np.zeros(4))
        attack = AttackSignal(kind="constant-bias", d=[100.0, 100.0], start_step=0)
        y = measure_gps(uav_model, state, attack, np.zeros(2))
        np.testing.assert_allclose(y, [100.0, 100.0])

    def test_gps_zero_case(self, uav_model):
        state = PlantState.initial(np.zeros(4))
        y = measure_gps(uav_model, state, AttackSignal.none(), np.zeros(2))
        np.testing.assert_allclose(y, [0.0, 0.0])

    def test_bias_respects_start_step(self, uav_model):
        attack = AttackSignal(kind="constant-bias", d=[7.0, -3.0], start_step=5)
        x = np.array([1.0, 1.0, 0.0, 0.0])
        for k in range(12):
            state = PlantState(x=x, x_prev=x, k=k)
            y = measure_gps(uav_model, state, attack, np.zeros(2))
            if k < 5:
                np.testing.assert_allclose(y, [1.0, 1.0])
            else:
                np.testing.assert_allclose(y, [8.0, -2.0])

    def test_imu_zero_difference(self, uav_model):
        x = np.array([5.0, 5.0, 1.0, 1.0])
        state = PlantState(x=x, x_prev=x.copy(), k=1)
        np.testing.assert_allclose(
            measure_imu(uav_model, state, np.zeros(2)), [0.0, 0.0])

    def test_imu_ignores_position_change(self, uav_model):
        state = PlantState(x=np.array([0.01, 0.0, 0.0, 0.0]),
                           x_prev=np.zeros(4), k=1)
        np.testing.assert_allclose(
            measure_imu(uav_model, state, np.zeros(2)), [0.0, 0.0])

    def test_imu_reads_velocity_change(self, uav_model):
        state = PlantState(x=np.array([0.0, 0.0, 0.5, -0.5]),
                           x_prev=np.zeros(4), k=1)
        np.testing.assert_allclose(
            measure_imu(uav_model, state, np.zeros(2)), [0.5, -0.5])


class TestAttackSignal:
    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError):
            AttackSignal(kind="pulse")

    def test_rejects_negative_start(self):
        with pytest.raises(ValueError):
            AttackSignal(kind="constant-bias", d=[1.0], start_step=-1)

    def test_ramp_grows_linearly(self):
        attack = AttackSignal(kind="ramp", d=[2.0], start_step=10)
        assert attack.signal_at(9, 1) == pytest.approx([0.0])
        assert attack.signal_at(10, 1) == pytest.approx([0.0])
        assert attack.signal_at(13, 1) == pytest.approx([6.0])

    def test_custom_sequence(self):
        attack = AttackSignal(kind="custom-sequence", start_step=2,
                              sequence=[[1.0], [2.0]])
        assert attack.signal_at(0, 1) == pytest.approx([0.0])
        assert attack.signal_at(2, 1) == pytest.approx([1.0])
        assert attack.signal_at(3, 1) == pytest.approx([2.0])

    def test_custom_sequence_exhausted(self):
        attack = AttackSignal(kind="custom-sequence", start_step=0,
                              sequence=[[1.0]])
        with pytest.raises(ValueError, match="too short"):
            attack.signal_at(1, 1)

    def test_magnitude_dimension_checked(self, uav_model):
        attack = AttackSignal(kind="constant-bias", d=[1.0, 2.0, 3.0])
        state = PlantState.initial(np.zeros(4))
        with pytest.raises(ValueError):
            measure_gps(uav_model, state, attack, np.zeros(2))


class TestGaussianSampler:
    def test_zero_covariance_returns_zero(self):
        sampler = GaussianSampler(np.zeros((3, 3)))
        rng = np.random.default_rng(0)
        for _ in range(5):
            assert np.array_equal(sampler.sample(rng), np.zeros(3))

    def test_deterministic_given_stream_state(self):
        sampler = GaussianSampler(0.5 * np.eye(2))
        a = sampler.sample(np.random.default_rng(42))
        b = sampler.sample(np.random.default_rng(42))
        assert np.array_equal(a, b)

    def test_empirical_covariance(self):
        sigma = 1e-4 * np.eye(4)
        sampler = GaussianSampler(sigma)
        rng = np.random.default_rng(7)
        draws = np.array([sampler.sample(rng) for _ in range(100_000)])
        emp = np.cov(draws.T)
        rel = np.linalg.norm(emp - sigma) / np.linalg.norm(sigma)
        assert rel < 0.05

    def test_empirical_mean_near_zero(self):
        sigma = 1e-4 * np.eye(4)
        sampler = GaussianSampler(sigma)
        rng = np.random.default_rng(11)
        n = 100_000
        draws = np.array([sampler.sample(rng) for _ in range(n)])
        bound = 4.0 * np.sqrt(np.linalg.norm(sigma, 2) / n)
        assert np.all(np.abs(draws.mean(axis=0)) <= bound)

    def test_correlated_covariance_reproduced(self):
        sigma = np.array([[2.0, 0.8], [0.8, 1.0]])
        sampler = GaussianSampler(sigma)
        rng = np.random.default_rng(3)
        draws = np.array([sampler.sample(rng) for _ in range(50_000)])
        emp = np.cov(draws.T)
        assert np.linalg.norm(emp - sigma) / np.linalg.norm(sigma) < 0.05

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError, match="positive semidefinite"):
            GaussianSampler(np.array([[1.0, 0.0], [0.0, -0.5]]))

    def test_clamps_tiny_negative_eigenvalues(self):
        sigma = np.eye(2) * 1e-6
        sigma[0, 0] = -1e-14  # numerically zero, inside the clamp tolerance
        sampler = GaussianSampler(sigma)
        rng = np.random.default_rng(0)
        sampler.sample(rng)

    def test_sample_noise_wrapper(self):
        rng = np.random.default_rng(5)
        v = sample_noise(rng, np.eye(3))
        assert v.shape == (3,)


class TestValidateModel:
    def test_uav_model_valid(self, uav_model):
        assert validate_model(uav_model) == []

    def test_reports_indefinite_sensor_covariance(self):
        model = make_uav_model()
        bad = SystemModel(A=model.A, B=model.B, C_G=model.C_G, C_I=model.C_I,
                          Sigma_w=model.Sigma_w,
                          Sigma_G=np.diag([1e-3, -1e-3]),
                          Sigma_I=model.Sigma_I)
        findings = validate_model(bad)
        assert any("Sigma_G" in f and "positive definite" in f for f in findings)

    def test_reports_singular_A(self):
        model = make_uav_model()
        A = model.A.copy()
        A[3, :] = 0.0
        bad = SystemModel(A=A, B=model.B, C_G=model.C_G, C_I=model.C_I,
                          Sigma_w=model.Sigma_w, Sigma_G=model.Sigma_G,
                          Sigma_I=model.Sigma_I)
        findings = validate_model(bad)
        assert any("A" in f and "singular" in f for f in findings)

    def test_reports_dimension_mismatch(self):
        model = make_uav_model()
        bad = SystemModel(A=model.A, B=model.B, C_G=model.C_G, C_I=model.C_I,
                          Sigma_w=model.Sigma_w,
                          Sigma_G=np.eye(3) * 1e-3,  # wrong size for 2 GPS rows
                          Sigma_I=model.Sigma_I)
        findings = validate_model(bad)
        assert any("Sigma_G" in f for f in findings)

    def test_reports_asymmetric_covariance(self):
        model = make_uav_model()
        Sigma_G = np.array([[1e-3, 1e-4], [0.0, 1e-3]])
        bad = SystemModel(A=model.A, B=model.B, C_G=model.C_G, C_I=model.C_I,
                          Sigma_w=model.Sigma_w, Sigma_G=Sigma_G,
                          Sigma_I=model.Sigma_I)
        findings = validate_model(bad)
        assert any("symmetric" in f for f in findings)
