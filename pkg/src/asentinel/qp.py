"""Dense convex QP solver (predictor-corrector interior point + polish).

Solves ``min 0.5 x'Px + q'x  s.t.  Gx <= h`` for strictly convex ``P`` at
desk scale (tens of variables, hundreds of rows). A final active-set polish
solves the KKT equality system exactly so returned points carry KKT
residuals far below the 1e-8 acceptance threshold. A regularized phase-1
problem provides feasibility certificates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve


@dataclass
class QPResult:
    x: np.ndarray
    duals: np.ndarray
    status: str                 # "optimal" | "infeasible" | "max_iterations"
    iterations: int
    kkt_residual: float
    phase1_value: float | None = None
    trace: list = field(default_factory=list)


def kkt_residual(P, q, G, h, x, z) -> float:
    """Max-norm KKT residual: stationarity, primal feasibility, complementarity."""
    stat = float(np.abs(P @ x + q + (G.T @ z if G is not None and G.size else 0.0)).max())
    if G is None or not G.size:
        return stat
    slack = h - G @ x
    prim = float(np.maximum(-slack, 0.0).max())
    dual = float(np.maximum(-z, 0.0).max()) if z.size else 0.0
    comp = float(np.abs(z * slack).max()) if z.size else 0.0
    return max(stat, prim, dual, comp)


def _dedupe_rows(G, h):
    """Drop exactly duplicated (row, bound) pairs; keeps the tightest bound."""
    if G is None or not G.size:
        return G, h
    order = np.lexsort(np.column_stack([G, h]).T)
    keep = []
    prev = None
    for idx in order:
        key = (G[idx].tobytes(), float(h[idx]))
        if key != prev:
            keep.append(idx)
            prev = key
    keep = np.sort(np.asarray(keep))
    return G[keep], h[keep]


def _initial_point(P_cho, q, G, h):
    x = cho_solve(P_cho, -q)
    slack = h - G @ x
    shift = max(0.0, -1.5 * float(slack.min())) + 1.0
    s = slack + shift
    z = np.ones_like(s)
    return x, s, z


def solve_qp(P, q, G=None, h=None, *, tol=1e-10, max_iter=80,
             collect_trace=False, polish=True, dedupe=True) -> QPResult:
    """Interior-point solve of a strictly convex inequality-constrained QP.

    ``polish`` refines the final iterate with an active-set KKT solve (worth
    it when residuals below 1e-8 are required); ``dedupe`` drops exactly
    repeated constraint rows first. Both are skipped by the hot inner loops
    of the augmented-Lagrangian solver.
    """
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float).reshape(-1)
    n = q.size
    try:
        P_cho = cho_factor(0.5 * (P + P.T), lower=True)
    except np.linalg.LinAlgError as exc:
        raise ValueError("quadratic coefficient must be positive definite") from exc

    if G is None or (hasattr(G, "size") and not np.size(G)) or (h is not None and not np.size(h)):
        x = cho_solve(P_cho, -q)
        res = float(np.abs(P @ x + q).max())
        return QPResult(x=x, duals=np.zeros(0), status="optimal",
                        iterations=0, kkt_residual=res)

    G = np.asarray(G, dtype=float).reshape(-1, n)
    h = np.asarray(h, dtype=float).reshape(-1)
    if dedupe:
        G, h = _dedupe_rows(G, h)
    m = h.size

    x, s, z = _initial_point(P_cho, q, G, h)
    best_x = x.copy()
    best_res = np.inf
    trace = []
    status = "max_iterations"
    iterations = max_iter
    for it in range(max_iter):
        s = np.maximum(s, 1e-300)
        z = np.maximum(z, 1e-300)
        rd = P @ x + q + G.T @ z
        rp = G @ x + s - h
        mu = float(s @ z) / m
        res = max(float(np.abs(rd).max()), float(np.abs(rp).max()), mu)
        if not np.isfinite(res):
            x = best_x
            break
        if res < best_res:
            best_res = res
            best_x = x.copy()
        if collect_trace:
            obj = 0.5 * float(x @ P @ x) + float(q @ x)
            trace.append({"iteration": it, "objective": obj,
                          "violation": float(np.maximum(G @ x - h, 0.0).max()),
                          "residual": res})
        if res <= tol:
            status = "optimal"
            iterations = it
            break

        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            d = z / s
            if not np.all(np.isfinite(d)):
                x = best_x
                break
            H = P + (G.T * d) @ G
        with np.errstate(over="ignore", invalid="ignore"):
            H_sym = 0.5 * (H + H.T)
        if not np.all(np.isfinite(H_sym)):
            x = best_x
            break
        try:
            H_cho = cho_factor(H_sym, lower=True)
        except (np.linalg.LinAlgError, ValueError):
            try:
                H_cho = cho_factor(H_sym + 1e-12 * abs(np.trace(H_sym))
                                   * np.eye(n), lower=True)
            except (np.linalg.LinAlgError, ValueError):
                x = best_x
                break

        def _solve_step(rc):
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                rhs = -rd + G.T @ ((rc - z * rp) / s)
                if not np.all(np.isfinite(rhs)):
                    return None
                dx = cho_solve(H_cho, rhs)
                ds = -rp - G @ dx
                dz = (-rc - z * ds) / s
            if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(dz))):
                return None
            return dx, ds, dz

        # Affine predictor
        affine = _solve_step(s * z)
        if affine is None:
            x = best_x
            break
        dx_a, ds_a, dz_a = affine
        alpha_p = _max_step(s, ds_a)
        alpha_d = _max_step(z, dz_a)
        mu_aff = float((s + alpha_p * ds_a) @ (z + alpha_d * dz_a)) / m
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0

        # Corrector
        corrector = _solve_step(s * z + ds_a * dz_a - sigma * mu)
        if corrector is None:
            x = best_x
            break
        dx, ds, dz = corrector
        alpha = 0.99 * min(_max_step(s, ds), _max_step(z, dz))
        alpha = min(1.0, alpha)
        x = x + alpha * dx
        s = s + alpha * ds
        z = z + alpha * dz

    if polish:
        x, z = _polish(P, q, G, h, x, z)
    res = kkt_residual(P, q, G, h, x, z)
    if status == "optimal" or res <= 1e-8:
        status = "optimal"
    return QPResult(x=x, duals=z, status=status, iterations=iterations,
                    kkt_residual=res, trace=trace)


def _max_step(v, dv) -> float:
    neg = dv < 0
    if not neg.any():
        return 1.0
    return min(1.0, float(np.min(-v[neg] / dv[neg])))


def _polish(P, q, G, h, x, z):
    """Refine by solving the KKT equality system on the apparent active set."""
    slack = h - G @ x
    scale = 1.0 + np.abs(h)
    active = np.flatnonzero((slack <= 1e-6 * scale) & (z >= 1e-9))
    if active.size == 0:
        x_new = cho_solve(cho_factor(0.5 * (P + P.T), lower=True), -q)
        if np.all(G @ x_new <= h + 1e-9 * scale):
            return x_new, np.zeros_like(z)
        return x, z
    Ga = G[active]
    k = active.size
    kkt = np.block([[P, Ga.T], [Ga, np.zeros((k, k))]])
    rhs = np.concatenate([-q, h[active]])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    x_new = sol[:x.size]
    lam = sol[x.size:]
    z_new = np.zeros_like(z)
    z_new[active] = lam
    feasible = np.all(G @ x_new <= h + 1e-9 * scale)
    if feasible and np.all(lam >= -1e-9):
        z_new[active] = np.maximum(lam, 0.0)
        return x_new, z_new
    return x, z


def find_feasible_point(G, h, *, tol=1e-10):
    """Regularized phase-1: minimize the worst violation.

    Returns ``(feasible, x, worst_violation)``; a strictly positive optimal
    worst violation certifies that ``{x: Gx <= h}`` is empty.
    """
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float).reshape(-1)
    if not G.size:
        return True, np.zeros(0), 0.0
    m, n = G.shape
    eps = 1e-8
    P1 = eps * np.eye(n + 1)
    P1[n, n] = 1e-6
    q1 = np.zeros(n + 1)
    q1[n] = 1.0
    G1 = np.hstack([G, -np.ones((m, 1))])
    res = solve_qp(P1, q1, G1, h, tol=tol)
    x = res.x[:n]
    t = float(res.x[n])
    worst = float(np.maximum(G @ x - h, 0.0).max())
    if worst <= 1e-9:
        return True, x, worst
    return False, x, max(t, worst)
