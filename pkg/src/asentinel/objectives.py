"""Deterministic objective forms over the stacked input sequence.

With the whole input sequence fixed at the start of a detection window, the
expected tracking-plus-effort cost collapses to a single quadratic form, the
probability of misidentifying the attack hypothesis admits an explicit upper
bound built from pairwise Gaussian overlap coefficients, and the
expectational linear constraints expand into one linear inequality per
hypothesis and step. Everything here is a pure builder or evaluator; built
forms are immutable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from asentinel.model import (
    CovarianceFactorizationError,
    LinearGaussianSystem,
    ModeSet,
    _freeze,
    _matrix,
    _vector,
    control_vector,
    propagate_moments,
)


def input_to_state_maps(A, B_mode, horizon: int) -> list:
    """Linear maps ``T_k`` with ``mean_state_k = A^k x0 + T_k u`` for k = 0..N."""
    n, p = B_mode.shape
    maps = [np.zeros((n, p * horizon))]
    for k in range(horizon):
        nxt = A @ maps[-1]
        nxt[:, k * p:(k + 1) * p] += B_mode
        maps.append(nxt)
    return maps


def _reference_vector(reference, m: int, horizon: int) -> np.ndarray:
    ref = np.asarray(reference, dtype=float)
    if ref.ndim == 2:
        ref = ref.reshape(-1)
    return _vector(ref, "reference", size=m * (horizon + 1))


def _check_weight(mat, name, require_pd=False):
    mat = _matrix(mat, name)
    if mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be square")
    scale = max(1.0, float(np.abs(mat).max()))
    if float(np.abs(mat - mat.T).max()) > 1e-10 * scale:
        raise ValueError(f"{name} must be symmetric")
    eigs = np.linalg.eigvalsh(0.5 * (mat + mat.T))
    if require_pd:
        if float(eigs.min()) <= 0.0:
            raise ValueError(f"{name} must be positive definite")
    elif float(eigs.min()) < -1e-10 * max(float(np.trace(mat)), 1.0):
        raise ValueError(f"{name} must be positive semi-definite")
    return mat


@dataclass(frozen=True)
class ControlObjectiveForm:
    """Expected tracking-plus-effort cost as ``u' Phi u + psi' u + c0``.

    ``Phi`` aggregates the prior-weighted quadratic input coefficients of
    every step padded to the full stacked horizon, plus the block-diagonal
    effort weight; ``psi`` collects the linear coefficients from the initial
    state and the reference; ``c0`` carries the reference energy and the
    input-independent output-covariance trace term.
    """

    Phi: np.ndarray
    psi: np.ndarray
    c0: float
    horizon: int
    input_dim: int

    def __post_init__(self):
        dim = self.horizon * self.input_dim
        Phi = _matrix(self.Phi, "Phi", rows=dim, cols=dim)
        psi = _vector(self.psi, "psi", size=dim)
        object.__setattr__(self, "Phi", _freeze(0.5 * (Phi + Phi.T)))
        object.__setattr__(self, "psi", _freeze(psi))
        object.__setattr__(self, "c0", float(self.c0))


def build_control_objective(system: LinearGaussianSystem, modes: ModeSet,
                            reference, Q, R, horizon: int) -> ControlObjectiveForm:
    """Collapse the expected cost over modes into one explicit quadratic.

    ``Q`` weights the squared output tracking error on steps 0..N and ``R``
    the input effort on steps 0..N-1. ``R`` may be semi-definite when the
    form is used for evaluation only; solving for inputs additionally
    requires ``Phi`` to be positive definite.
    """
    N = int(horizon)
    if N < 0:
        raise ValueError("horizon must be non-negative")
    n, m, p = system.n, system.m, system.p
    Q = _check_weight(Q, "Q")
    if Q.shape[0] != m:
        raise ValueError(f"Q must be {m}x{m}")
    R = _check_weight(R, "R")
    if R.shape[0] != p:
        raise ValueError(f"R must be {p}x{p}")
    ref = _reference_vector(reference, m, N).reshape(N + 1, m)

    A, C = system.A, system.C
    CtQC = C.T @ Q @ C
    CtQ = C.T @ Q
    dim = p * N

    Phi = np.zeros((dim, dim))
    for k in range(N):
        Phi[k * p:(k + 1) * p, k * p:(k + 1) * p] += R

    psi = np.zeros(dim)
    c0 = 0.0

    a = np.array(system.x0_mean)
    a_terms = []                       # A^k x0 for k = 0..N
    for k in range(N + 1):
        a_terms.append(a)
        a = system.A @ a

    # Trace of Q against the diagonal output covariance blocks; the state
    # covariance recursion carries no input or mode dependence.
    cov = np.array(system.x0_cov)
    trace_term = 0.0
    for k in range(N + 1):
        trace_term += float(np.trace(Q @ (C @ cov @ C.T + system.Hv)))
        cov = A @ cov @ A.T + system.Hw

    for entry in modes:
        weight = entry.prior
        maps = input_to_state_maps(A, entry.input_matrix, N)
        for k in range(N + 1):
            Tk = maps[k]
            ak = a_terms[k]
            rk = ref[k]
            CT = C @ Tk
            Phi += weight * (CT.T @ Q @ CT)
            psi += weight * (2.0 * Tk.T @ (CtQC @ ak) - 2.0 * Tk.T @ (CtQ @ rk))
            c0 += weight * (float(ak @ CtQC @ ak) - 2.0 * float(rk @ Q @ (C @ ak)))

    for k in range(N + 1):
        c0 += float(ref[k] @ Q @ ref[k])
    c0 += trace_term

    return ControlObjectiveForm(Phi=Phi, psi=psi, c0=c0, horizon=N, input_dim=p)


def eval_control_objective(form: ControlObjectiveForm, u) -> float:
    u = control_vector(u, form.input_dim, form.horizon)
    return float(u @ form.Phi @ u + form.psi @ u + form.c0)


def control_objective_gradient(form: ControlObjectiveForm, u) -> np.ndarray:
    u = control_vector(u, form.input_dim, form.horizon)
    return 2.0 * (form.Phi @ u) + form.psi


@dataclass(frozen=True)
class PairTerm:
    """Pairwise ingredients of the misidentification bound.

    ``delta_matrix`` and ``delta_offset`` give the affine map from the input
    sequence to the difference of stacked output means of hypotheses ``j``
    and ``i``; ``sum_cov_inv`` is the inverse of the summed output
    covariances and is input independent, as is ``log_det_term`` (which is
    zero whenever both hypotheses share the same output covariance, the case
    here since the state covariance carries no input-matrix dependence).
    ``quad``, ``lin`` and ``const`` cache the pulled-back quadratic so the
    exponent and its derivatives evaluate without touching the stacked
    output space again.
    """

    i: int
    j: int
    weight: float
    delta_matrix: np.ndarray
    delta_offset: np.ndarray
    sum_cov_inv: np.ndarray
    log_det_term: float
    quad: np.ndarray = None
    lin: np.ndarray = None
    const: float = 0.0

    def __post_init__(self):
        for name in ("delta_matrix", "delta_offset", "sum_cov_inv"):
            object.__setattr__(self, name,
                               np.asarray(getattr(self, name), dtype=float))
        if self.quad is None:
            weighted = self.sum_cov_inv @ self.delta_matrix
            object.__setattr__(self, "quad",
                               _freeze(self.delta_matrix.T @ weighted))
            object.__setattr__(self, "lin",
                               _freeze(self.delta_matrix.T
                                       @ (self.sum_cov_inv @ self.delta_offset)))
            object.__setattr__(self, "const",
                               float(self.delta_offset
                                     @ self.sum_cov_inv @ self.delta_offset))

    def exponent(self, u: np.ndarray) -> float:
        return 0.25 * (float(u @ self.quad @ u) + 2.0 * float(self.lin @ u)
                       + self.const) + self.log_det_term

    def exponent_gradient(self, u: np.ndarray) -> np.ndarray:
        return 0.5 * (self.quad @ u + self.lin)


@dataclass(frozen=True)
class DetectionBoundForm:
    """Upper bound on the misidentification probability of the first window.

    The bound sums ``sqrt(prior_i * prior_j) * exp(-exponent_ij(u))`` over
    hypothesis pairs; each exponent is a quarter of the Mahalanobis distance
    between the pair's output-mean trajectories plus a covariance term.
    Larger input excitation separates the means and lowers the bound.
    """

    pairs: tuple
    horizon: int
    input_dim: int
    output_dim: int

    @property
    def max_value(self) -> float:
        return float(sum(term.weight for term in self.pairs))


def build_detection_bound(system: LinearGaussianSystem, modes: ModeSet,
                          horizon: int) -> DetectionBoundForm:
    """Assemble the pairwise terms of the misidentification bound.

    Requires every hypothesis' stacked output covariance to be positive
    definite, which holds whenever the measurement noise covariance is.
    """
    N = int(horizon)
    if N < 0:
        raise ValueError("horizon must be non-negative")
    n, m, p = system.n, system.m, system.p
    dim = p * N
    K = N + 1
    C = system.C

    mean_offsets = []
    mean_maps = []
    covs = []
    log_dets = []
    zero_u = np.zeros(dim)
    for entry in modes:
        maps = input_to_state_maps(system.A, entry.input_matrix, N)
        lin = np.vstack([C @ maps[k] for k in range(K)])
        mean_maps.append(lin)
        moments = propagate_moments(system, entry, zero_u, N)
        mean_offsets.append(np.array(moments.y_mean))
        cov = np.array(moments.y_cov)
        covs.append(cov)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise CovarianceFactorizationError(
                f"output covariance of mode {entry.index} is singular; the bound "
                "needs positive definite measurement noise"
            ) from exc
        log_dets.append(2.0 * float(np.sum(np.log(np.diag(chol)))))

    pairs = []
    priors = modes.priors
    for i in range(modes.size):
        for j in range(i + 1, modes.size):
            total = covs[i] + covs[j]
            try:
                chol = cho_factor(total, lower=True)
            except np.linalg.LinAlgError as exc:
                raise CovarianceFactorizationError(
                    f"summed output covariance of modes ({i}, {j}) is singular"
                ) from exc
            inv = cho_solve(chol, np.eye(total.shape[0]))
            log_det_half_sum = (2.0 * float(np.sum(np.log(np.diag(chol[0]))))
                                + total.shape[0] * np.log(0.5))
            log_det_term = 0.5 * (log_det_half_sum
                                  - 0.5 * (log_dets[i] + log_dets[j]))
            pairs.append(PairTerm(
                i=i, j=j,
                weight=float(np.sqrt(priors[i] * priors[j])),
                delta_matrix=_freeze(mean_maps[j] - mean_maps[i]),
                delta_offset=_freeze(mean_offsets[j] - mean_offsets[i]),
                sum_cov_inv=_freeze(0.5 * (inv + inv.T)),
                log_det_term=max(float(log_det_term), 0.0),
            ))
    return DetectionBoundForm(pairs=tuple(pairs), horizon=N, input_dim=p,
                              output_dim=m)


def eval_detection_bound(form: DetectionBoundForm, u) -> float:
    u = control_vector(u, form.input_dim, form.horizon)
    value = 0.0
    for term in form.pairs:
        value += term.weight * np.exp(-term.exponent(u))
    return float(value)


def detection_bound_gradient(form: DetectionBoundForm, u) -> np.ndarray:
    u = control_vector(u, form.input_dim, form.horizon)
    grad = np.zeros(u.size)
    for term in form.pairs:
        grad -= (term.weight * np.exp(-term.exponent(u))
                 * term.exponent_gradient(u))
    return grad


def detection_bound_hessian(form: DetectionBoundForm, u) -> np.ndarray:
    """Exact Hessian of the bound (indefinite in general)."""
    u = control_vector(u, form.input_dim, form.horizon)
    hess = np.zeros((u.size, u.size))
    for term in form.pairs:
        scale = term.weight * np.exp(-term.exponent(u))
        grad_phi = term.exponent_gradient(u)
        hess += scale * (np.outer(grad_phi, grad_phi) - 0.5 * term.quad)
    return hess


@dataclass(frozen=True)
class ConstraintTag:
    """Provenance of one expanded constraint row."""

    mode: int
    step: int
    row: int


@dataclass(frozen=True)
class ExpandedConstraints:
    """Stacked linear inequalities ``matrix @ u <= bound`` over all modes/steps."""

    matrix: np.ndarray
    bound: np.ndarray
    tags: tuple

    def __post_init__(self):
        matrix = _matrix(self.matrix, "matrix") if np.size(self.matrix) else \
            np.zeros((0, 0))
        bound = _vector(self.bound, "bound")
        if matrix.shape[0] != bound.size or matrix.shape[0] != len(self.tags):
            raise ValueError("rows, bounds and tags must align")
        object.__setattr__(self, "matrix", _freeze(matrix))
        object.__setattr__(self, "bound", _freeze(bound))
        object.__setattr__(self, "tags", tuple(self.tags))

    @property
    def num_rows(self) -> int:
        return self.bound.size

    def violation(self, u) -> float:
        if self.num_rows == 0:
            return 0.0
        u = np.asarray(u, dtype=float)
        return float(np.maximum(self.matrix @ u - self.bound, 0.0).max())


def expand_constraints(system: LinearGaussianSystem, modes: ModeSet,
                       Gx, Gu, g, horizon: int) -> ExpandedConstraints:
    """Expand expected-value constraints into explicit input inequalities.

    For every hypothesis and every step ``k`` in 0..N the expected state is
    written as an affine function of the input sequence and substituted into
    ``Gx E[x_k] + Gu u_k <= g``. The step-N rows carry no input term beyond
    the state part because the window holds no input at step N.
    """
    N = int(horizon)
    n, m, p = system.n, system.m, system.p
    Gx = _matrix(Gx, "Gx", cols=n)
    n_c = Gx.shape[0]
    Gu = _matrix(Gu, "Gu", rows=n_c, cols=p)
    g = _vector(g, "g", size=n_c)
    dim = p * N

    rows = np.zeros((modes.size * (N + 1) * n_c, dim))
    bound = np.zeros(rows.shape[0])
    tags = []
    a_terms = []
    a = np.array(system.x0_mean)
    for k in range(N + 1):
        a_terms.append(a)
        a = system.A @ a

    r = 0
    for entry in modes:
        maps = input_to_state_maps(system.A, entry.input_matrix, N)
        for k in range(N + 1):
            block = Gx @ maps[k]
            if k < N:
                block = block.copy()
                block[:, k * p:(k + 1) * p] += Gu
            offset = g - Gx @ a_terms[k]
            for row in range(n_c):
                rows[r] = block[row]
                bound[r] = offset[row]
                tags.append(ConstraintTag(mode=entry.index, step=k, row=row))
                r += 1
    return ExpandedConstraints(matrix=rows, bound=bound, tags=tuple(tags))


def control_form_diagnostics(system: LinearGaussianSystem, modes: ModeSet,
                             reference, Q, R, horizon: int) -> dict:
    """Exportable coefficient dump of the control objective.

    Besides the coefficients in use, the dump carries the variant linear and
    constant terms obtained from an alternative published reading of the
    per-step expansion (no output-map sandwich in the linear term, positive
    unscaled reference cross term). The variants are retained for external
    cross-checking only; the in-use coefficients are the ones validated
    against Monte-Carlo simulation. The variant linear term is only defined
    when the output and state dimensions agree.
    """
    form = build_control_objective(system, modes, reference, Q, R, horizon)
    N = form.horizon
    n, m, p = system.n, system.m, system.p
    ref = _reference_vector(reference, m, N).reshape(N + 1, m)
    Q = _matrix(Q, "Q")

    a_terms = []
    a = np.array(system.x0_mean)
    for k in range(N + 1):
        a_terms.append(a)
        a = system.A @ a

    psi_variant = None
    if m == n:
        psi_v = np.zeros(p * N)
        for entry in modes:
            maps = input_to_state_maps(system.A, entry.input_matrix, N)
            for k in range(N + 1):
                Tk = maps[k]
                psi_v += entry.prior * (
                    2.0 * Tk.T @ (Q.T @ a_terms[k])
                    - 2.0 * Tk.T @ (system.C.T @ (Q.T @ ref[k])))
        psi_variant = psi_v.tolist()

    c0_variant = form.c0
    for entry in modes:
        for k in range(N + 1):
            cross = float(ref[k] @ Q @ (system.C @ a_terms[k]))
            c0_variant += entry.prior * (2.0 * cross + cross)

    return {
        "horizon": N,
        "input_dim": p,
        "Phi": form.Phi.tolist(),
        "psi": form.psi.tolist(),
        "c0": form.c0,
        "psi_variant_reading": psi_variant,
        "c0_variant_reading": c0_variant,
    }
