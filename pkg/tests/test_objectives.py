import numpy as np
import pytest

from asentinel.model import (
    LinearGaussianSystem,
    ModeSet,
    enumerate_modes,
    propagate_moments,
    uniform_priors,
)
from asentinel.objectives import (
    DetectionBoundForm,
    PairTerm,
    build_control_objective,
    build_detection_bound,
    control_form_diagnostics,
    control_objective_gradient,
    detection_bound_gradient,
    eval_control_objective,
    eval_detection_bound,
    expand_constraints,
)


def scalar_system(**kw):
    args = dict(A=0.5, B=1.0, C=1.0, Hw=0.0, Hv=0.0, x0=0.0, P0=0.0)
    args.update(kw)
    return LinearGaussianSystem(
        A=[[args["A"]]], B=[[args["B"]]], C=[[args["C"]]],
        Hw=[[args["Hw"]]], Hv=[[args["Hv"]]],
        x0_mean=[args["x0"]], x0_cov=[[args["P0"]]])


def random_instance(seed, n=2, m=2, p=2, N=3):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    A *= 0.7 / max(abs(np.linalg.eigvals(A)))
    G = rng.normal(size=(n, n))
    Gv = rng.normal(size=(m, m))
    system = LinearGaussianSystem(
        A=A, B=rng.normal(size=(n, p)), C=rng.normal(size=(m, n)),
        Hw=G @ G.T / n + 0.1 * np.eye(n),
        Hv=Gv @ Gv.T / m + 0.2 * np.eye(m),
        x0_mean=rng.normal(size=n),
        x0_cov=0.3 * np.eye(n))
    modes = enumerate_modes(system.B, uniform_priors(p))
    return rng, system, modes, N


class TestControlObjective:
    def test_pure_effort(self):
        system = scalar_system()
        modes = enumerate_modes(system.B, [0.5, 0.5])
        form = build_control_objective(system, modes, np.zeros(3),
                                       [[0.0]], [[1.0]], 2)
        assert eval_control_objective(form, [1.0, 2.0]) == pytest.approx(5.0)

    def test_trace_term_only(self):
        single = ModeSet(((False,),), (np.array([[1.0]]),), [1.0])
        system = scalar_system(A=1.0, P0=1.0)
        form = build_control_objective(system, single, np.zeros(2),
                                       [[1.0]], [[0.0]], 1)
        assert eval_control_objective(form, [0.0]) == pytest.approx(2.0)

    def test_value_at_zero_is_constant(self):
        _, system, modes, N = random_instance(0)
        form = build_control_objective(system, modes,
                                       np.zeros(system.m * (N + 1)),
                                       np.eye(system.m), np.eye(system.p), N)
        assert eval_control_objective(form, np.zeros(system.p * N)) == \
            pytest.approx(form.c0)

    def test_quadratic_identity(self):
        from asentinel.objectives import ControlObjectiveForm
        form = ControlObjectiveForm(Phi=np.eye(2), psi=np.zeros(2), c0=0.0,
                                    horizon=1, input_dim=2)
        assert eval_control_objective(form, [3.0, 4.0]) == pytest.approx(25.0)

    def test_matches_direct_moment_evaluation(self):
        # Same cost assembled the slow way: loop over steps and hypotheses
        # using the exact trajectory moments.
        rng, system, modes, N = random_instance(1)
        Q = np.eye(system.m) * 0.8
        R = np.eye(system.p) * 0.3
        reference = rng.normal(size=system.m * (N + 1))
        u = rng.normal(size=system.p * N)
        form = build_control_objective(system, modes, reference, Q, R, N)

        direct = 0.0
        ref = reference.reshape(N + 1, system.m)
        ub = u.reshape(N, system.p)
        for k in range(N):
            direct += float(ub[k] @ R @ ub[k])
        for entry in modes:
            mom = propagate_moments(system, entry, u, N)
            for k in range(N + 1):
                err = mom.y_mean_block(k) - ref[k]
                direct += entry.prior * (float(err @ Q @ err)
                                         + float(np.trace(Q @ mom.y_cov_block(k, k))))
        value = eval_control_objective(form, u)
        assert value == pytest.approx(direct, rel=1e-8)

    def test_gradient_identity(self):
        rng, system, modes, N = random_instance(2)
        form = build_control_objective(system, modes,
                                       rng.normal(size=system.m * (N + 1)),
                                       np.eye(system.m), np.eye(system.p), N)
        u = rng.normal(size=system.p * N)
        expected = 2.0 * form.Phi @ u + form.psi
        assert np.allclose(control_objective_gradient(form, u), expected)

    def test_rejects_bad_weights(self):
        system = scalar_system()
        modes = enumerate_modes(system.B, [0.5, 0.5])
        with pytest.raises(ValueError):
            build_control_objective(system, modes, np.zeros(3),
                                    [[-1.0]], [[1.0]], 2)

    def test_diagnostics_carry_variant_readings(self):
        _, system, modes, N = random_instance(3, n=2, m=2)
        dump = control_form_diagnostics(system, modes,
                                        np.ones(system.m * (N + 1)),
                                        np.eye(2), np.eye(2), N)
        assert dump["psi_variant_reading"] is not None
        assert dump["c0_variant_reading"] != dump["c0"]
        assert len(dump["Phi"]) == system.p * N


class TestDetectionBound:
    def test_identical_modes_hit_max(self):
        system = scalar_system(A=0.5, Hw=0.1, Hv=0.2, P0=0.1)
        modes = ModeSet(((False,), (True,)),
                        (np.zeros((1, 1)), np.zeros((1, 1))), [0.5, 0.5])
        form = build_detection_bound(system, modes, 2)
        value = eval_detection_bound(form, [0.4, -0.2])
        assert value == pytest.approx(0.5)
        assert form.max_value == pytest.approx(0.5)

    def test_pair_arithmetic(self):
        term = PairTerm(i=0, j=1, weight=0.5,
                        delta_matrix=np.zeros((1, 1)),
                        delta_offset=np.array([2.0]),
                        sum_cov_inv=np.array([[0.25]]),
                        log_det_term=0.0)
        form = DetectionBoundForm(pairs=(term,), horizon=1, input_dim=1,
                                  output_dim=1)
        assert eval_detection_bound(form, [0.0]) == \
            pytest.approx(0.5 * np.exp(-0.25))

    def test_bounded_by_weight_sum(self):
        rng, system, modes, N = random_instance(4)
        form = build_detection_bound(system, modes, N)
        for _ in range(10):
            value = eval_detection_bound(form, rng.normal(size=system.p * N))
            assert 0.0 < value <= form.max_value + 1e-12

    def test_log_det_terms_vanish_for_shared_covariance(self):
        _, system, modes, N = random_instance(5)
        form = build_detection_bound(system, modes, N)
        for term in form.pairs:
            assert term.log_det_term == pytest.approx(0.0, abs=1e-9)

    def test_covariance_pieces_are_input_independent(self):
        rng, system, modes, N = random_instance(6)
        form = build_detection_bound(system, modes, N)
        u = rng.normal(size=system.p * N)
        for term in form.pairs:
            assert term.exponent(u) >= term.log_det_term - 1e-12
            assert np.array_equal(term.sum_cov_inv, term.sum_cov_inv.T)

    def test_gradient_vs_finite_differences(self):
        rng, system, modes, N = random_instance(7)
        form = build_detection_bound(system, modes, N)
        u = rng.normal(size=system.p * N)
        grad = detection_bound_gradient(form, u)
        fd = np.zeros_like(u)
        h = 1e-5
        for i in range(u.size):
            e = np.zeros_like(u)
            e[i] = h
            fd[i] = (eval_detection_bound(form, u + e)
                     - eval_detection_bound(form, u - e)) / (2 * h)
        assert np.abs(grad - fd).max() <= 1e-6 * (1 + np.linalg.norm(grad))

    def test_requires_positive_definite_output_noise(self):
        from asentinel.model import CovarianceFactorizationError
        system = scalar_system(Hv=0.0, Hw=0.0, P0=0.0)
        modes = enumerate_modes(system.B, [0.5, 0.5])
        with pytest.raises(CovarianceFactorizationError):
            build_detection_bound(system, modes, 2)


class TestExpandConstraints:
    def test_level_cap_row(self):
        system = scalar_system(A=1.0, x0=6.6)
        modes = ModeSet(((False,),), (np.array([[1.0]]),), [1.0])
        cons = expand_constraints(system, modes, [[1.0]], [[0.0]], [15.0], 1)
        row_k1 = [(t, r, b) for t, r, b in
                  zip(cons.tags, cons.matrix, cons.bound) if t.step == 1]
        assert len(row_k1) == 1
        _, row, bound = row_k1[0]
        assert row[0] == pytest.approx(1.0)
        assert bound == pytest.approx(8.4)

    def test_row_count_and_step_zero_structure(self):
        _, system, modes, N = random_instance(8)
        n_c = 2
        Gx = np.zeros((n_c, system.n))
        Gx[0, 0] = 1.0
        Gu = np.vstack([np.zeros(system.p), -np.ones(system.p)])
        g = [10.0, 0.0]
        cons = expand_constraints(system, modes, Gx, Gu, g, N)
        assert cons.num_rows == n_c * (N + 1) * modes.size
        for tag, row in zip(cons.tags, cons.matrix):
            if tag.step == 0:
                assert not row[system.p:].any()

    def test_input_only_rows_touch_one_block(self):
        _, system, modes, N = random_instance(9)
        Gu = -np.eye(system.p)
        cons = expand_constraints(system, modes, np.zeros((system.p, system.n)),
                                  Gu, np.zeros(system.p), N)
        for tag, row in zip(cons.tags, cons.matrix):
            blocks = row.reshape(N, system.p)
            touched = np.flatnonzero(np.abs(blocks).sum(axis=1))
            if tag.step < N:
                assert touched.tolist() == [tag.step]
            else:
                assert touched.size == 0

    def test_masked_actuator_gets_zero_state_coefficients(self):
        system = LinearGaussianSystem(A=[[1.0]], B=[[1.0, 2.0]], C=[[1.0]],
                                      Hw=[[0.0]], Hv=[[0.0]],
                                      x0_mean=[0.0], x0_cov=[[0.0]])
        modes = enumerate_modes(system.B, uniform_priors(2))
        cons = expand_constraints(system, modes, [[1.0]],
                                  np.zeros((1, 2)), [5.0], 2)
        # Hypothesis 3 blocks both actuators: its state rows carry no input.
        for tag, row in zip(cons.tags, cons.matrix):
            if tag.mode == 3:
                assert not row.any()

    def test_satisfying_rows_bounds_expected_path(self):
        rng, system, modes, N = random_instance(10)
        Gx = rng.normal(size=(2, system.n))
        Gu = rng.normal(size=(2, system.p))
        g = [4.0, 6.0]
        cons = expand_constraints(system, modes, Gx, Gu, g, N)
        u = rng.normal(size=system.p * N) * 0.05
        if cons.violation(u) > 0:
            pytest.skip("randomly infeasible sample input")
        ub = np.vstack([u.reshape(N, system.p), np.zeros(system.p)])
        for entry in modes:
            mom = propagate_moments(system, entry, u, N)
            for k in range(N + 1):
                lhs = Gx @ mom.x_mean_block(k) + Gu @ ub[k]
                assert np.all(lhs <= np.asarray(g) + 1e-8)
