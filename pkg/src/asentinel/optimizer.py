"""Input-sequence design problems and their solvers.

Three formulations are supported: minimize the expected control cost alone
(a convex QP), minimize it subject to a cap on the misidentification bound,
or minimize the misidentification bound subject to a cap on the control
cost. The capped formulations are non-convex, so they are solved with an
augmented Lagrangian on the scalar side constraint, inner damped-Newton
steps that respect the linear constraints through an inner QP, and
deterministic multi-start.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from asentinel import qp
from asentinel.model import ControlSequence
from asentinel.objectives import (
    ControlObjectiveForm,
    DetectionBoundForm,
    ExpandedConstraints,
    control_objective_gradient,
    detection_bound_gradient,
    detection_bound_hessian,
    eval_control_objective,
    eval_detection_bound,
)

CONSTRAINT_TOL = 1e-6
STATIONARITY_TOL = 1e-6
VALUE_TIE_TOL = 1e-9


class ProblemKind(enum.Enum):
    PURE_CONTROL = "pure-control"
    DETECTION_CONSTRAINED = "detection-constrained"
    CONTROL_CONSTRAINED = "control-constrained"


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    MAX_ITERATIONS = "max_iterations"


@dataclass(frozen=True)
class ProblemSpec:
    """One input-design problem over a shared horizon.

    ``jd_max`` caps the misidentification bound in the detection-constrained
    formulation; ``jc_max`` caps the control cost in the control-constrained
    one. Forms must be built for the same plant, modes and horizon.
    """

    kind: ProblemKind
    control_form: ControlObjectiveForm
    detection_form: DetectionBoundForm | None = None
    constraints: ExpandedConstraints | None = None
    jd_max: float | None = None
    jc_max: float | None = None

    def __post_init__(self):
        if self.kind is ProblemKind.DETECTION_CONSTRAINED:
            if self.detection_form is None or self.jd_max is None:
                raise ValueError("detection-constrained problems need a "
                                 "detection form and jd_max")
            if self.jd_max <= 0:
                raise ValueError("jd_max must be positive")
        if self.kind is ProblemKind.CONTROL_CONSTRAINED:
            if self.detection_form is None:
                raise ValueError("control-constrained problems need a detection form")
            if self.jc_max is None or self.jc_max <= 0:
                raise ValueError("jc_max must be positive")
        if (self.detection_form is not None
                and (self.detection_form.horizon != self.control_form.horizon
                     or self.detection_form.input_dim != self.control_form.input_dim)):
            raise ValueError("forms were built for different horizons")

    @property
    def dim(self) -> int:
        return self.control_form.horizon * self.control_form.input_dim


@dataclass
class Solution:
    """Result of one solve, including independent feasibility rechecks."""

    u_star: ControlSequence
    objective_value: float
    constraint_violation: float
    side_constraint_slack: float
    status: SolveStatus
    restarts_used: int
    stationarity: float
    diagnostics: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)


def _constraint_arrays(constraints: ExpandedConstraints | None):
    """Deduplicated dense rows of the linear constraints (None when absent)."""
    if constraints is None or constraints.num_rows == 0:
        return None, None
    return qp._dedupe_rows(np.asarray(constraints.matrix),
                           np.asarray(constraints.bound))


def _ensure_feasible(G, h):
    """Cheap feasibility probe; falls back to the phase-1 solve."""
    if G is None:
        return True, None, 0.0
    if np.all(h >= 0.0):
        return True, np.zeros(G.shape[1]), 0.0
    return qp.find_feasible_point(G, h)


def solve(spec: ProblemSpec, *, seed: int = 0, restarts: int = 16,
          step_budget: int = 250, collect_trace: bool = False) -> Solution:
    if spec.kind is ProblemKind.PURE_CONTROL:
        return solve_pure_control(spec, collect_trace=collect_trace)
    return solve_with_side_constraint(spec, seed=seed, restarts=restarts,
                                      step_budget=step_budget,
                                      collect_trace=collect_trace)


def solve_pure_control(spec: ProblemSpec, *, collect_trace: bool = False) -> Solution:
    """Global minimizer of the convex control-cost QP under the linear rows."""
    form = spec.control_form
    eigs = np.linalg.eigvalsh(form.Phi)
    if float(eigs.min()) <= 0.0:
        raise ValueError("the quadratic coefficient must be positive definite; "
                         "use a positive definite effort weight")
    G, h = _constraint_arrays(spec.constraints)
    if G is not None:
        feasible, _, worst = _ensure_feasible(G, h)
        if not feasible:
            u = ControlSequence.zeros(form.input_dim, form.horizon)
            return Solution(
                u_star=u, objective_value=float("nan"),
                constraint_violation=worst, side_constraint_slack=float("inf"),
                status=SolveStatus.INFEASIBLE, restarts_used=0,
                stationarity=float("nan"),
                diagnostics={"phase1_violation": worst},
            )
    result = qp.solve_qp(2.0 * form.Phi, form.psi, G, h,
                         collect_trace=collect_trace, dedupe=False)
    u = result.x
    violation = spec.constraints.violation(u) if spec.constraints is not None else 0.0
    status = SolveStatus.OPTIMAL if result.status == "optimal" \
        else SolveStatus.MAX_ITERATIONS
    return Solution(
        u_star=ControlSequence(u, form.horizon, form.input_dim),
        objective_value=eval_control_objective(form, u),
        constraint_violation=violation,
        side_constraint_slack=float("inf"),
        status=status,
        restarts_used=0,
        stationarity=result.kkt_residual,
        diagnostics={"kkt_residual": result.kkt_residual,
                     "qp_iterations": result.iterations},
        trace=result.trace,
    )


def _objective_functions(spec: ProblemSpec):
    """Return (f, side) bundles of value/gradient/Hessian callables."""
    cform = spec.control_form
    dform = spec.detection_form

    def control_bundle(u):
        return (eval_control_objective(cform, u),
                control_objective_gradient(cform, u),
                2.0 * np.asarray(cform.Phi))

    def detection_bundle(u):
        return (eval_detection_bound(dform, u),
                detection_bound_gradient(dform, u),
                detection_bound_hessian(dform, u))

    if spec.kind is ProblemKind.DETECTION_CONSTRAINED:
        limit = float(spec.jd_max)
        return control_bundle, detection_bundle, limit
    limit = float(spec.jc_max) if spec.jc_max is not None else float("inf")
    return detection_bundle, control_bundle, limit


def _psd_clip(H, floor=1e-8):
    H = 0.5 * (H + H.T)
    w, V = np.linalg.eigh(H)
    lift = floor * max(1.0, float(np.abs(w).max()))
    return (V * np.maximum(w, lift)) @ V.T


def _project(u, G, h):
    if G is None:
        return u
    if np.all(G @ u <= h + 1e-12):
        return u
    res = qp.solve_qp(np.eye(u.size), -u, G, h, tol=1e-10, polish=False,
                      dedupe=False)
    return res.x


def _al_value(f_val, side_val, limit, lam, rho):
    c = side_val - limit
    hinge = max(0.0, lam + rho * c)
    return f_val + (hinge * hinge - lam * lam) / (2.0 * rho)


def _al_gradient_hessian(u, lam, rho, f_bundle, side_bundle, limit):
    f_val, f_grad, f_hess = f_bundle(u)
    s_val, s_grad, s_hess = side_bundle(u)
    hinge = lam + rho * (s_val - limit)
    if hinge > 0.0:
        grad = f_grad + hinge * s_grad
        hess = f_hess + hinge * s_hess + rho * np.outer(s_grad, s_grad)
    else:
        grad = f_grad
        hess = f_hess
    value = _al_value(f_val, s_val, limit, lam, rho)
    return value, grad, hess


def _active_rows(u, G, h):
    if G is None:
        return np.zeros(0, dtype=int)
    slack = h - G @ u
    return np.flatnonzero(slack <= 1e-8 * (1.0 + np.abs(h)))


def _independent_subset(rows, rtol=1e-10):
    """Indices of a maximal linearly independent subset of ``rows``."""
    if rows.shape[0] == 0:
        return np.zeros(0, dtype=int)
    from scipy.linalg import qr

    _, R, piv = qr(rows.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return np.zeros(0, dtype=int)
    rank = int(np.sum(diag > rtol * diag[0]))
    return np.sort(piv[:rank])


def _equality_matrix(u, s_grad, pin_side, G, h):
    """Full-row-rank equality rows for KKT steps: active rows plus the cap."""
    active = _active_rows(u, G, h)
    Ga = G[active] if active.size else np.zeros((0, u.size))
    if Ga.shape[0]:
        keep = _independent_subset(Ga)
        Ga = Ga[keep]
    if not pin_side:
        return Ga, False
    s_row = np.asarray(s_grad, dtype=float).reshape(1, -1)
    if float(np.abs(s_row).max(initial=0.0)) == 0.0:
        return Ga, False
    if Ga.shape[0]:
        # Drop the cap row if its gradient already lies in the active span.
        coeff, *_ = np.linalg.lstsq(Ga.T, s_row[0], rcond=None)
        residual = s_row[0] - Ga.T @ coeff
        if float(np.abs(residual).max()) <= 1e-10 * float(np.abs(s_row).max()):
            return Ga, False
    return np.vstack([Ga, s_row]), True


def _polish_on_active_set(u, lam, rho, f_bundle, side_bundle, limit, G, h,
                          iters=4):
    """Newton-KKT steps on the apparently active constraints.

    The interior-point step tolerance floors the reachable gradient norm on
    stiff subproblems; a few direct KKT solves with the active linear rows
    (and the side constraint, when the iterate sits on its boundary) pinned
    as equalities push the inner residual to machine level. Steps that
    would leave the feasible set or blow up are discarded.
    """
    for _ in range(iters):
        value, grad, hess = _al_gradient_hessian(u, lam, rho, f_bundle,
                                                 side_bundle, limit)
        H = _psd_clip(hess)
        s_val, s_grad = side_bundle(u)[:2]
        c = s_val - limit
        pin_side = np.isfinite(limit) and abs(c) <= 1e-4 * (1.0 + abs(limit))
        A, side_pinned = _equality_matrix(u, s_grad, pin_side, G, h)
        n = u.size
        if A.shape[0]:
            targets = np.zeros(A.shape[0])
            if side_pinned:
                targets[-1] = -c
            kkt = np.block([[H, A.T],
                            [A, np.zeros((A.shape[0], A.shape[0]))]])
            rhs = np.concatenate([-grad, targets])
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
            d = sol[:n]
        else:
            d = np.linalg.solve(H, -grad)
        norm = float(np.abs(d).max(initial=0.0))
        if not np.isfinite(norm) or norm > 1e-2 * (1.0 + float(np.abs(u).max())):
            break
        cand = u + d
        if G is not None and np.any(G @ cand - h > 1e-9 * (1.0 + np.abs(h))):
            break
        cand_value = _al_gradient_hessian(cand, lam, rho, f_bundle,
                                          side_bundle, limit)[0]
        if not np.isfinite(cand_value):
            break
        if not side_pinned and cand_value > value + 1e-8 * (1.0 + abs(value)):
            break
        u = cand
        if norm <= 1e-14 * (1.0 + float(np.abs(u).max())):
            break
    return u


def _boundary_sqp(u, f_bundle, side_bundle, limit, G, h, iters=20):
    """Equality-pinned SQP refinement on the side-constraint boundary.

    Used when the cap is active: Newton-KKT steps keep the cap and the
    active linear rows as equalities, with an l1 merit line search guarding
    against bad curvature. Converges quadratically where the augmented
    Lagrangian only crawls (a flat objective against a steep cap).
    """
    nu = 0.0
    for _ in range(iters):
        f_val, f_grad, f_hess = f_bundle(u)
        s_val, s_grad, s_hess = side_bundle(u)
        c = s_val - limit
        A, side_pinned = _equality_matrix(u, s_grad, True, G, h)
        if not side_pinned:
            break
        k = A.shape[0]
        targets = np.zeros(k)
        targets[-1] = -c
        H = _psd_clip(f_hess + max(nu, 0.0) * s_hess)
        kkt = np.block([[H, A.T], [A, np.zeros((k, k))]])
        rhs = np.concatenate([-f_grad, targets])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        d = sol[:u.size]
        nu_new = float(sol[-1])
        norm = float(np.abs(d).max(initial=0.0))
        if not np.isfinite(norm) or norm <= 1e-12 * (1.0 + float(np.abs(u).max())):
            break
        sigma = 2.0 * abs(nu_new) + 1.0

        def merit(x):
            val = f_bundle(x)[0] + sigma * abs(side_bundle(x)[0] - limit)
            if G is not None:
                val += sigma * float(np.maximum(G @ x - h, 0.0).max(initial=0.0))
            return val

        base = merit(u)
        t = min(1.0, 2.0 * (1.0 + float(np.abs(u).max())) / norm)
        curvature = float(d @ ((f_hess + max(nu_new, 0.0) * s_hess) @ d))
        slope = float(f_grad @ d)
        if curvature > 0.0 and slope < 0.0:
            t = min(t, max(-slope / curvature, 1e-12))
        moved = False
        for _ in range(30):
            cand = u + t * d
            cand_merit = merit(cand)
            if np.isfinite(cand_merit) and \
                    cand_merit <= base + 1e-10 * (1.0 + abs(base)):
                u = cand
                moved = True
                break
            t *= 0.5
        nu = nu_new
        if not moved:
            break
    return u, max(nu, 0.0)


def _inner_newton(u, lam, rho, f_bundle, side_bundle, limit, G, h,
                  max_steps=25, step_tol=1e-10):
    """Damped Newton on the augmented Lagrangian inside ``{u: Gu <= h}``.

    When the cap is finite its linearization rides along as an extra row of
    the step QP, which keeps iterates from fighting the hinge penalty on
    flat objectives; the hinge still guards the exact cap across steps.
    Returns the new iterate and the number of Newton steps spent.
    """
    steps_used = 0
    for _ in range(max(int(max_steps), 1)):
        steps_used += 1
        value, grad, hess = _al_gradient_hessian(u, lam, rho, f_bundle,
                                                 side_bundle, limit)
        H = _psd_clip(hess)
        G_step, h_step = G, (h - G @ u) if G is not None else None
        if np.isfinite(limit):
            s_val, s_grad = side_bundle(u)[:2]
            c = s_val - limit
            room = limit - s_val if c <= 0.0 else -0.5 * c
            row = s_grad.reshape(1, -1)
            if G_step is None:
                G_step, h_step = row, np.array([room])
            else:
                G_step = np.vstack([G_step, row])
                h_step = np.concatenate([h_step, [room]])
        if G_step is not None:
            step = qp.solve_qp(H, grad, G_step, h_step, tol=1e-9,
                               polish=False, dedupe=False)
            d = step.x
            bad = (not np.all(np.isfinite(d))
                   or np.any(G_step @ d > h_step + 1e-6 * (1.0 + np.abs(h_step))))
            if bad:
                # The linearized cap can make the step set empty (an
                # unattainable cap); retry on the plain linear rows and let
                # the hinge fight the violation.
                if G is not None:
                    d = qp.solve_qp(H, grad, G, h - G @ u, tol=1e-9,
                                    polish=False, dedupe=False).x
                else:
                    d = np.linalg.solve(H, -grad)
                if not np.all(np.isfinite(d)):
                    break
        else:
            d = np.linalg.solve(H, -grad)
        norm = float(np.abs(d).max(initial=0.0))
        if norm <= step_tol * (1.0 + float(np.abs(u).max(initial=0.0))):
            break
        predicted = 0.5 * float(d @ H @ d) + float(grad @ d)
        noise = 1e-9 * (1.0 + abs(value))
        if -predicted <= noise:
            # Inside the evaluation noise floor; the raw step is still a
            # trustworthy Newton polish.
            u = u + d
            break
        cap = 10.0 * (1.0 + float(np.abs(u).max(initial=0.0)))
        slope = float(grad @ d)
        # When eigenvalue clipping has inflated the step along flat
        # directions, the Cauchy point of the unclipped model is the right
        # scale to start the backtracking from.
        t = min(1.0, cap / norm)
        curvature = float(d @ (hess @ d))
        if curvature > 0.0:
            t = min(t, max(-slope / curvature, 1e-12))
        accepted = False
        for _ in range(25):
            cand = u + t * d
            cand_value = _al_gradient_hessian(cand, lam, rho, f_bundle,
                                              side_bundle, limit)[0]
            if cand_value <= value + 1e-4 * t * slope + noise:
                u = cand
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
    return _polish_on_active_set(u, lam, rho, f_bundle, side_bundle, limit,
                                 G, h), steps_used


def _kkt_stationarity(u, f_grad, c_val, c_grad, limit, G, h) -> float:
    """Scaled first-order residual via least-squares KKT multipliers.

    Fits non-negative multipliers on the side constraint (when it sits
    within activity tolerance of its cap) and on the active linear rows,
    then returns the remaining gradient norm relative to the objective
    gradient scale. Independent of the augmented-Lagrangian multiplier
    state, so a tight inner solve certifies stationarity immediately.
    """
    from scipy.optimize import nnls

    columns = []
    if np.isfinite(limit) and c_val >= limit - 1e-6 * (1.0 + abs(limit)):
        columns.append(np.asarray(c_grad, dtype=float))
    if G is not None:
        slack = h - G @ u
        active = slack <= 1e-7 * (1.0 + np.abs(h))
        for idx in np.flatnonzero(active):
            columns.append(G[idx])
    scale = 1.0 + float(np.abs(f_grad).max(initial=0.0))
    if not columns:
        return float(np.abs(f_grad).max(initial=0.0)) / scale
    A = np.column_stack(columns)
    coeff, _ = nnls(A, -np.asarray(f_grad, dtype=float))
    residual = f_grad + A @ coeff
    return float(np.abs(residual).max(initial=0.0)) / scale


def solve_with_side_constraint(spec: ProblemSpec, *, seed: int = 0,
                               restarts: int = 16, max_outer: int = 500,
                               step_budget: int = 250,
                               collect_trace: bool = False,
                               extra_starts=None) -> Solution:
    """Best feasible local solution over a deterministic multi-start.

    Starts are the pure-control solution, the zero sequence (projected onto
    the linear rows) and seeded random perturbations. Ties in objective value
    break toward the smaller Euclidean norm, then lexicographically.
    """
    f_bundle, side_bundle, limit = _objective_functions(spec)
    G, h = _constraint_arrays(spec.constraints)
    dim = spec.dim
    cform = spec.control_form

    if G is not None:
        feasible, _, worst = _ensure_feasible(G, h)
        if not feasible:
            return Solution(
                u_star=ControlSequence.zeros(cform.input_dim, cform.horizon),
                objective_value=float("nan"), constraint_violation=worst,
                side_constraint_slack=float("nan"),
                status=SolveStatus.INFEASIBLE, restarts_used=0,
                stationarity=float("nan"),
                diagnostics={"phase1_violation": worst},
            )

    starts = []
    try:
        pure = solve_pure_control(ProblemSpec(
            kind=ProblemKind.PURE_CONTROL, control_form=cform,
            constraints=spec.constraints))
        if pure.status is SolveStatus.OPTIMAL:
            starts.append(np.asarray(pure.u_star.u))
    except ValueError:
        pass
    starts.append(_project(np.zeros(dim), G, h))
    if extra_starts:
        for u0 in extra_starts:
            starts.append(_project(np.asarray(u0, dtype=float).reshape(-1), G, h))
    rng = np.random.default_rng(seed)
    base = starts[0]
    scale = 1.0 + float(np.abs(base).max(initial=0.0))
    while len(starts) < restarts:
        cand = base + scale * rng.standard_normal(dim)
        starts.append(_project(cand, G, h))

    candidates = []
    trace = []
    for start_idx, u0 in enumerate(starts):
        u = np.array(u0, dtype=float)
        lam = 0.0
        rho = 10.0 / max(1.0, abs(limit)) if np.isfinite(limit) else 1.0
        prev_violation = float("inf")
        prev_f = np.inf
        prev_c = np.inf
        sqp_tried = False
        stagnant = 0
        budget = max(int(step_budget), 10)
        for outer in range(max_outer):
            u, used = _inner_newton(u, lam, rho, f_bundle, side_bundle,
                                    limit, G, h,
                                    max_steps=min(25, budget))
            budget -= used
            f_val = f_bundle(u)[0]
            s_val = side_bundle(u)[0]
            c = s_val - limit
            violation = max(0.0, c)
            # Multiplier step only on sufficient violation progress,
            # otherwise raise the penalty (classical switching rule).
            if violation <= max(CONSTRAINT_TOL, 0.1 * prev_violation):
                lam = max(0.0, lam + rho * c)
            else:
                rho = min(rho * 10.0, 1e12)
            if collect_trace:
                trace.append({"start": start_idx, "outer": outer,
                              "objective": f_val,
                              "side_violation": violation, "rho": rho})
            stat = None
            if violation <= CONSTRAINT_TOL:
                stat = _kkt_stationarity(u, f_bundle(u)[1], s_val,
                                         side_bundle(u)[1], limit, G, h)
                if stat <= STATIONARITY_TOL:
                    break
            # A feasible iterate that is not stationary, or one that stopped
            # moving at the cap, marks an augmented-Lagrangian stall; one
            # round of boundary SQP resolves it or nothing will.
            stalled = (abs(f_val - prev_f) <= 1e-9 * (1.0 + abs(f_val))
                       and abs(c - prev_c) <= 1e-9 * (1.0 + abs(c)))
            near_cap = np.isfinite(limit) and c >= -1e-3 * (1.0 + abs(limit))
            if not sqp_tried and near_cap and outer >= 1 and \
                    (stalled or stat is not None):
                sqp_tried = True
                refined, nu_ref = _boundary_sqp(u, f_bundle, side_bundle,
                                                limit, G, h)
                r_val = side_bundle(refined)[0]
                r_violation = max(0.0, r_val - limit)
                if r_violation <= CONSTRAINT_TOL:
                    r_stat = _kkt_stationarity(refined, f_bundle(refined)[1],
                                               r_val, side_bundle(refined)[1],
                                               limit, G, h)
                    if r_stat <= STATIONARITY_TOL:
                        u = refined
                        break
                if r_violation <= max(violation, CONSTRAINT_TOL) and \
                        f_bundle(refined)[0] <= f_val:
                    u = refined
                    lam = nu_ref
            stagnant = stagnant + 1 if stalled else 0
            if stagnant >= 2 and violation <= CONSTRAINT_TOL:
                # Feasible but pinned by a flat landscape; further outer
                # iterations cannot move the iterate measurably.
                break
            if budget <= 0:
                break
            prev_violation = max(violation, 1e-300)
            prev_f = f_val
            prev_c = c
        if np.isfinite(limit):
            # Restoration passes: a stiff, escalating penalty squashes any
            # leftover cap violation without moving the objective
            # appreciably.
            rho_rest = max(rho, 1e8 / (1.0 + abs(limit)))
            for _ in range(3):
                if side_bundle(u)[0] - limit <= CONSTRAINT_TOL:
                    break
                u, _ = _inner_newton(u, lam, rho_rest, f_bundle, side_bundle,
                                     limit, G, h, max_steps=12)
                rho_rest = min(rho_rest * 100.0, 1e14)
        f_val = f_bundle(u)[0]
        s_val = side_bundle(u)[0]
        stat = _kkt_stationarity(u, f_bundle(u)[1], s_val, side_bundle(u)[1],
                                 limit, G, h)
        lin_violation = spec.constraints.violation(u) if spec.constraints else 0.0
        candidates.append({
            "u": u, "value": f_val, "side": s_val,
            "side_violation": max(0.0, s_val - limit),
            "lin_violation": lin_violation, "stationarity": stat,
            "start": start_idx,
        })

    feasible = [c for c in candidates
                if c["side_violation"] <= CONSTRAINT_TOL
                and c["lin_violation"] <= CONSTRAINT_TOL]
    restarts_used = len(starts)
    if not feasible:
        best_side = min(candidates, key=lambda c: c["side"])
        return Solution(
            u_star=ControlSequence(best_side["u"], cform.horizon, cform.input_dim),
            objective_value=best_side["value"],
            constraint_violation=best_side["lin_violation"],
            side_constraint_slack=limit - best_side["side"],
            status=SolveStatus.INFEASIBLE,
            restarts_used=restarts_used,
            stationarity=best_side["stationarity"],
            diagnostics={"min_side_value": best_side["side"]},
            trace=trace,
        )

    def sort_key(c):
        return (c["value"], float(np.linalg.norm(c["u"])), tuple(c["u"]))

    best_value = min(c["value"] for c in feasible)
    near = [c for c in feasible
            if c["value"] <= best_value + VALUE_TIE_TOL * (1.0 + abs(best_value))]
    best = min(near, key=sort_key)
    status = SolveStatus.FEASIBLE if best["stationarity"] <= STATIONARITY_TOL \
        else SolveStatus.MAX_ITERATIONS
    return Solution(
        u_star=ControlSequence(best["u"], cform.horizon, cform.input_dim),
        objective_value=best["value"],
        constraint_violation=best["lin_violation"],
        side_constraint_slack=limit - best["side"],
        status=status,
        restarts_used=restarts_used,
        stationarity=best["stationarity"],
        diagnostics={"side_value": best["side"], "best_start": best["start"]},
        trace=trace,
    )


def sweep_detection_threshold(control_form, detection_form, constraints,
                              thresholds, *, seed: int = 0, restarts: int = 8):
    """Solve the detection-capped problem for several caps.

    Caps are solved tightest first and every feasible solution is offered as
    an extra start to the looser caps (it stays feasible there), which keeps
    the realized optimal cost monotone in the cap up to solver noise.
    Returns solutions ordered like ``thresholds``.
    """
    order = np.argsort(np.asarray(thresholds, dtype=float))
    solutions: dict[int, Solution] = {}
    carried: list[np.ndarray] = []
    for idx in order:
        spec = ProblemSpec(
            kind=ProblemKind.DETECTION_CONSTRAINED,
            control_form=control_form, detection_form=detection_form,
            constraints=constraints, jd_max=float(thresholds[idx]),
        )
        sol = solve_with_side_constraint(spec, seed=seed, restarts=restarts,
                                         extra_starts=list(carried))
        solutions[int(idx)] = sol
        if sol.status in (SolveStatus.FEASIBLE, SolveStatus.MAX_ITERATIONS):
            carried.append(np.asarray(sol.u_star.u))
    return [solutions[i] for i in range(len(thresholds))]
