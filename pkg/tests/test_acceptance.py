"""Acceptance gate: every release criterion with its pinned tolerance.

Each test prints one PASS/FAIL line (visible with ``pytest -s`` or in the
captured output of failures). The channel-study criteria share one 50-seed
batch of closed-loop runs through a module-scoped fixture.
"""

import time

import pytest

from asentinel import verification as V


def report(label, result, elapsed=None, budget=None):
    timing = ""
    if elapsed is not None:
        timing = f" [{elapsed:.1f}s"
        timing += f" / budget {budget:.0f}s]" if budget else "]"
    print(f"acceptance {label}: {'PASS' if result.passed else 'FAIL'} "
          f"- {result.detail}{timing}")


def test_moment_propagation_oracle():
    start = time.time()
    result = V.check_moment_propagation(n_systems=10, n_samples=100_000)
    elapsed = time.time() - start
    report("moment-propagation", result, elapsed, 60)
    assert result.passed, result.detail
    assert elapsed <= 60.0


def test_expected_cost_oracle():
    start = time.time()
    result = V.check_control_objective_mc(n_instances=5, n_samples=200_000,
                                          rel_tol=0.02)
    elapsed = time.time() - start
    report("expected-cost", result, elapsed, 120)
    assert result.passed, result.detail
    assert elapsed <= 120.0


def test_detection_bound_quadrature_oracle():
    start = time.time()
    result = V.check_detection_bound_quadrature(n_instances=10, tol=1e-6)
    elapsed = time.time() - start
    report("bound-quadrature", result, elapsed, 30)
    assert result.passed, result.detail
    assert elapsed <= 30.0


def test_gradient_checks():
    result = V.check_objective_gradients(n_points=20)
    report("gradients", result)
    assert result.passed, result.detail


def test_qp_grid_oracle():
    result = V.check_qp_against_grid(n_instances=3)
    report("qp-vs-grid", result)
    assert result.passed, result.detail
    assert result.metrics["max_kkt"] <= 1e-8


def test_capped_solves_vs_lattice():
    result = V.check_side_constraint_grid()
    report("capped-vs-lattice", result)
    assert result.passed, result.detail


def test_identification_rate():
    result = V.check_mmae_identification(n_runs=1000, required_rate=0.95)
    report("identification-rate", result)
    assert result.passed, result.detail


@pytest.fixture(scope="module")
def channel_study():
    start = time.time()
    result = V.check_directional_tradeoff(n_seeds=50, restarts=2)
    result.metrics["elapsed"] = time.time() - start
    return result


def test_directional_tradeoff(channel_study):
    result = channel_study
    report("directional-tradeoff", result, result.metrics["elapsed"], 600)
    metrics = result.metrics
    assert metrics["jc_detection_capped"] >= 1.0
    assert metrics["jc_control_capped"] >= 1.0
    assert metrics["jd_detection_capped"] <= 1.0
    assert metrics["jd_control_capped"] <= 1.0
    assert metrics["jd_control_capped"] <= min(1.0,
                                               metrics["jd_detection_capped"])
    assert metrics["elapsed"] <= 600.0


def test_closed_loop_constraints(channel_study):
    metrics = channel_study.metrics
    ok = bool(metrics["constraints_ok"])
    print(f"acceptance closed-loop-constraints: {'PASS' if ok else 'FAIL'} "
          f"- expected levels under cap and heads non-negative on every run")
    assert ok


def test_cap_sweep_monotonicity():
    result = V.check_tradeoff_monotonicity()
    report("cap-sweep-monotone", result)
    assert result.passed, result.detail


def test_remaining_oracles():
    for check in (V.check_innovation_whiteness(),
                  V.check_bank_scripted_attack(),
                  V.check_channel_jacobian(),
                  V.check_discretization_impulse()):
        report(check.name, check)
        assert check.passed, check.detail
