import numpy as np
import pytest

from asentinel.model import (
    CapacityError,
    ControlSequence,
    CovarianceFactorizationError,
    LinearGaussianSystem,
    ModeSet,
    apply_mode_mask,
    enumerate_modes,
    mask_from_string,
    mask_to_string,
    propagate_moments,
    psd_sqrt,
    sample_rollout,
    sample_rollouts,
    system_from_json,
    system_to_json,
    uniform_priors,
)


def scalar_system(A=0.5, B=1.0, C=1.0, Hw=0.0, Hv=0.0, x0=0.0, P0=0.0):
    return LinearGaussianSystem(A=[[A]], B=[[B]], C=[[C]], Hw=[[Hw]],
                                Hv=[[Hv]], x0_mean=[x0], x0_cov=[[P0]])


def random_system(rng, n=3, m=2, p=2):
    A = rng.normal(size=(n, n))
    A *= 0.7 / max(abs(np.linalg.eigvals(A)))
    G = rng.normal(size=(n, n))
    Gv = rng.normal(size=(m, m))
    G0 = rng.normal(size=(n, n))
    return LinearGaussianSystem(
        A=A, B=rng.normal(size=(n, p)), C=rng.normal(size=(m, n)),
        Hw=G @ G.T / n + 0.05 * np.eye(n),
        Hv=Gv @ Gv.T / m + 0.05 * np.eye(m),
        x0_mean=rng.normal(size=n),
        x0_cov=G0 @ G0.T / n + 0.05 * np.eye(n),
    )


class TestApplyModeMask:
    def test_zeroes_masked_columns(self):
        B = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = apply_mode_mask(B, [False, True])
        assert out.tolist() == [[1.0, 0.0], [3.0, 0.0]]

    def test_all_false_is_identity(self):
        B = np.arange(6.0).reshape(2, 3)
        assert np.array_equal(apply_mode_mask(B, [False] * 3), B)

    def test_all_true_zeroes_everything(self):
        B = np.arange(6.0).reshape(2, 3) + 1.0
        assert not apply_mode_mask(B, [True] * 3).any()

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            apply_mode_mask(np.eye(2), [True])


class TestEnumerateModes:
    def test_binary_counting_order(self):
        modes = enumerate_modes(np.array([[1.0, 2.0], [3.0, 4.0]]),
                                uniform_priors(2))
        assert modes.mask_strings() == ["00", "10", "01", "11"]
        assert np.allclose(modes.priors, 0.25)

    def test_three_actuators(self):
        modes = enumerate_modes(np.ones((2, 3)), np.full(8, 0.125))
        assert modes.size == 8
        assert modes.mask_strings()[0] == "000"

    def test_single_actuator(self):
        modes = enumerate_modes([[2.0]], [0.6, 0.4])
        assert modes.size == 2
        assert modes.input_matrices[1][0, 0] == 0.0

    def test_capacity_guard(self):
        with pytest.raises(CapacityError):
            enumerate_modes(np.ones((1, 13)), np.full(2 ** 13, 2.0 ** -13))

    def test_bad_priors(self):
        with pytest.raises(ValueError):
            enumerate_modes(np.ones((1, 1)), [0.7, 0.7])

    def test_mode_set_rejects_wrong_matrix(self):
        with pytest.raises(ValueError):
            ModeSet(((False,), (True,)),
                    (np.array([[1.0]]), np.array([[1.0]])), [0.5, 0.5])


class TestPropagateMoments:
    def test_scalar_mean(self):
        system = scalar_system()
        modes = enumerate_modes(system.B, [0.5, 0.5])
        mom = propagate_moments(system, modes.entry(0), [1.0], 1)
        assert np.allclose(mom.x_mean, [0.0, 1.0])

    def test_random_walk_covariance(self):
        system = scalar_system(A=1.0, Hw=1.0, P0=1.0)
        modes = enumerate_modes(system.B, [0.5, 0.5])
        mom = propagate_moments(system, modes.entry(0), np.zeros(3), 3)
        assert [mom.x_cov_block(k, k)[0, 0] for k in range(4)] == [1, 2, 3, 4]
        assert mom.x_cov_block(2, 1)[0, 0] == 2.0

    def test_measurement_noise_only_on_diagonal(self):
        system = scalar_system(A=1.0, Hv=0.5, P0=1.0)
        modes = enumerate_modes(system.B, [0.5, 0.5])
        mom = propagate_moments(system, modes.entry(0), [0.0], 1)
        assert mom.y_cov_block(0, 0)[0, 0] == pytest.approx(1.5)
        assert mom.y_cov_block(1, 0)[0, 0] == pytest.approx(1.0)

    def test_state_covariance_mode_independent(self):
        rng = np.random.default_rng(3)
        system = random_system(rng)
        modes = enumerate_modes(system.B, uniform_priors(2))
        u = rng.normal(size=2 * 4)
        moms = [propagate_moments(system, entry, u, 4) for entry in modes]
        for mom in moms[1:]:
            assert np.array_equal(mom.x_cov, moms[0].x_cov)

    def test_mean_linearity_in_input(self):
        rng = np.random.default_rng(4)
        system = random_system(rng).with_initial_belief(
            np.zeros(3), np.zeros((3, 3)))
        modes = enumerate_modes(system.B, uniform_priors(2))
        u1 = rng.normal(size=8)
        u2 = rng.normal(size=8)
        m1 = propagate_moments(system, modes.entry(1), u1, 4)
        m2 = propagate_moments(system, modes.entry(1), u2, 4)
        m12 = propagate_moments(system, modes.entry(1), u1 + u2, 4)
        assert np.allclose(m12.x_mean, m1.x_mean + m2.x_mean, atol=1e-12)

    def test_output_covariance_symmetric_psd(self):
        rng = np.random.default_rng(5)
        system = random_system(rng)
        modes = enumerate_modes(system.B, uniform_priors(2))
        mom = propagate_moments(system, modes.entry(2), rng.normal(size=10), 5)
        scale = np.abs(mom.y_cov).max()
        assert np.abs(mom.y_cov - mom.y_cov.T).max() <= 1e-10 * scale
        eigs = np.linalg.eigvalsh(mom.y_cov)
        assert eigs.min() >= -1e-8 * np.trace(mom.y_cov)


class TestSampleRollout:
    def test_noise_free_equals_means(self):
        system = scalar_system(A=0.8)
        modes = enumerate_modes(system.B, [0.5, 0.5])
        u = np.array([1.0, -0.5, 0.25])
        states, outputs = sample_rollout(system, modes.entry(0), u, 3, 42)
        mom = propagate_moments(system, modes.entry(0), u, 3)
        assert np.allclose(states.reshape(-1), mom.x_mean)
        assert np.allclose(outputs.reshape(-1), mom.y_mean)

    def test_same_seed_same_path(self):
        rng = np.random.default_rng(6)
        system = random_system(rng)
        modes = enumerate_modes(system.B, uniform_priors(2))
        u = rng.normal(size=6)
        a = sample_rollout(system, modes.entry(1), u, 3, 123)
        b = sample_rollout(system, modes.entry(1), u, 3, 123)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_batch_matches_distribution_shape(self):
        rng = np.random.default_rng(7)
        system = random_system(rng)
        modes = enumerate_modes(system.B, uniform_priors(2))
        states, outputs = sample_rollouts(system, modes.entry(0),
                                          np.zeros(6), 3, 50, 9)
        assert states.shape == (50, 4, 3)
        assert outputs.shape == (50, 4, 2)

    def test_psd_sqrt_rejects_indefinite(self):
        with pytest.raises(CovarianceFactorizationError):
            psd_sqrt(np.array([[1.0, 0.0], [0.0, -0.5]]))


class TestControlSequence:
    def test_length_validation(self):
        with pytest.raises(ValueError):
            ControlSequence(np.zeros(3), horizon=2, input_dim=2)

    def test_blocks_roundtrip(self):
        seq = ControlSequence.from_blocks([[1.0, 2.0], [3.0, 4.0]])
        assert seq.horizon == 2 and seq.input_dim == 2
        assert np.array_equal(seq.blocks()[1], [3.0, 4.0])


class TestJsonRoundtrip:
    def test_roundtrip(self):
        rng = np.random.default_rng(8)
        system = random_system(rng)
        modes = enumerate_modes(system.B, uniform_priors(2))
        doc = system_to_json(system, modes)
        system2, modes2 = system_from_json(doc)
        assert np.allclose(system2.A, system.A)
        assert np.allclose(system2.Hv, system.Hv)
        assert modes2.mask_strings() == modes.mask_strings()
        assert np.allclose(modes2.priors, modes.priors)

    def test_mask_strings(self):
        assert mask_to_string((False, True, False)) == "010"
        assert mask_from_string("010") == (False, True, False)
        with pytest.raises(ValueError):
            mask_from_string("01x")

    def test_invariant_validation_on_construction(self):
        with pytest.raises(ValueError):
            LinearGaussianSystem(A=[[1.0]], B=[[1.0]], C=[[1.0]],
                                 Hw=[[-1.0]], Hv=[[0.0]],
                                 x0_mean=[0.0], x0_cov=[[0.0]])
        with pytest.raises(ValueError):
            LinearGaussianSystem(A=[[1.0, 0.0]], B=[[1.0]], C=[[1.0]],
                                 Hw=[[0.0]], Hv=[[0.0]],
                                 x0_mean=[0.0], x0_cov=[[0.0]])
