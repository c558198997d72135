"""Multiple-model detection of blocked actuators.

One Kalman filter is matched to each attack hypothesis; their innovations
drive a Bayesian posterior over the hypotheses. A bank of ``N`` detectors,
staggered by one step each and restarting every ``N`` steps, guarantees that
from step ``N - 1`` onward exactly one detector closes its window per step
and emits an argmax decision, so an attack starting anywhere inside a window
is covered by some aligned detector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from asentinel.model import LinearGaussianSystem, ModeSet, _freeze, _matrix, _vector

POSTERIOR_FLOOR = 1e-12
POSTERIOR_SUM_TOL = 1e-10
LOG_2PI = math.log(2.0 * math.pi)


class FilterNumericsError(RuntimeError):
    """Innovation covariance became singular for one hypothesis filter."""

    def __init__(self, message: str, mode: int):
        super().__init__(f"{message} (mode {mode})")
        self.mode = mode


@dataclass(frozen=True)
class KalmanFilterState:
    """State estimate of the filter matched to one hypothesis."""

    mode: int
    x_hat: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        x_hat = _vector(self.x_hat, "x_hat")
        P = _matrix(self.P, "P", rows=x_hat.size, cols=x_hat.size)
        P = 0.5 * (P + P.T)
        object.__setattr__(self, "x_hat", _freeze(x_hat))
        object.__setattr__(self, "P", _freeze(P))


def kf_step(filt: KalmanFilterState, system: LinearGaussianSystem,
            mode_input_matrix, u_k, y_k):
    """One predict/update cycle of a single hypothesis filter.

    Predicts with the hypothesis' masked input matrix, then assimilates the
    measurement. Returns ``(new_state, innovation, innovation_cov)``; the
    covariance update uses the Joseph form so the estimate covariance stays
    symmetric PSD.
    """
    Bm = _matrix(mode_input_matrix, "mode input matrix",
                 rows=system.n, cols=system.p)
    u_k = _vector(u_k, "u_k", size=system.p)
    x_pred = system.A @ filt.x_hat + Bm @ u_k
    P_pred = system.A @ filt.P @ system.A.T + system.Hw
    return kf_update(filt.mode, x_pred, P_pred, system, y_k)


def kf_update(mode: int, x_pred, P_pred, system: LinearGaussianSystem, y_k):
    """Measurement update from a predicted belief about the current state."""
    y_k = _vector(y_k, "y_k", size=system.m)
    P_pred = 0.5 * (P_pred + P_pred.T)
    C = system.C
    S = C @ P_pred @ C.T + system.Hv
    S = 0.5 * (S + S.T)
    try:
        chol = cho_factor(S, lower=True)
    except np.linalg.LinAlgError as exc:
        raise FilterNumericsError("singular innovation covariance", mode) from exc
    innovation = y_k - C @ x_pred
    gain = cho_solve(chol, C @ P_pred).T
    x_new = x_pred + gain @ innovation
    closed = np.eye(system.n) - gain @ C
    P_new = closed @ P_pred @ closed.T + gain @ system.Hv @ gain.T
    return KalmanFilterState(mode, x_new, P_new), innovation, _freeze(S)


def gaussian_log_likelihood(residual, cov) -> float:
    """Log density of a zero-mean Gaussian evaluated at ``residual``."""
    residual = np.asarray(residual, dtype=float)
    chol = np.linalg.cholesky(0.5 * (cov + cov.T))
    white = np.linalg.solve(chol, residual)
    log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return -0.5 * (residual.size * LOG_2PI + log_det + float(white @ white))


@dataclass(frozen=True)
class ModePosterior:
    """Probability vector over the attack hypotheses.

    Before any measurement the posterior equals the priors. ``flat_fallback``
    marks an update in which every hypothesis likelihood underflowed, so the
    posterior was left unchanged.
    """

    probs: np.ndarray
    flat_fallback: bool = False

    def __post_init__(self):
        probs = _vector(self.probs, "probs")
        if np.any(probs < 0) or np.any(probs > 1.0 + POSTERIOR_SUM_TOL):
            raise ValueError("posterior entries must lie in [0, 1]")
        if abs(float(probs.sum()) - 1.0) > POSTERIOR_SUM_TOL:
            raise ValueError("posterior must sum to 1")
        object.__setattr__(self, "probs", _freeze(probs))

    @classmethod
    def from_priors(cls, priors) -> "ModePosterior":
        return cls(np.asarray(priors, dtype=float))


def posterior_update(post: ModePosterior, innovations, innovation_covs) -> ModePosterior:
    """Bayes update from per-hypothesis innovations.

    Likelihoods are evaluated in log space with max subtraction to avoid
    underflow; each probability is floored at ``POSTERIOR_FLOOR`` before
    renormalizing so no hypothesis is ever permanently locked out. If every
    likelihood underflows the posterior is returned unchanged with the
    ``flat_fallback`` flag set.
    """
    probs = post.probs
    size = probs.size
    if len(innovations) != size or len(innovation_covs) != size:
        raise ValueError("one innovation and covariance per hypothesis required")
    log_likes = np.empty(size)
    for i in range(size):
        try:
            log_likes[i] = gaussian_log_likelihood(innovations[i], innovation_covs[i])
        except np.linalg.LinAlgError:
            log_likes[i] = -np.inf
    finite = np.isfinite(log_likes)
    if not finite.any():
        return replace(post, flat_fallback=True)
    shift = log_likes[finite].max()
    weights = np.where(finite, np.exp(log_likes - shift), 0.0) * probs
    total = float(weights.sum())
    if total <= 0.0:
        return replace(post, flat_fallback=True)
    new = np.maximum(weights / total, POSTERIOR_FLOOR)
    new = new / new.sum()
    return ModePosterior(new)


def decide(post: ModePosterior) -> int:
    """Most probable hypothesis; ties go to the lowest index."""
    return int(np.argmax(post.probs))


@dataclass(frozen=True)
class BankDecision:
    """Decision emitted by the detector whose window closed at ``step``."""

    step: int
    detector_id: int
    mode: int
    posterior: np.ndarray


class _Detector:
    """One staggered detector: a filter per hypothesis plus a posterior.

    Filters are advanced for all hypotheses at once with batched array
    arithmetic; the math is identical to :func:`kf_step` applied per mode.
    """

    def __init__(self, detector_id: int, offset: int, system: LinearGaussianSystem,
                 modes: ModeSet, horizon: int):
        self.id = detector_id
        self.offset = offset
        self.horizon = horizon
        self.system = system
        self.modes = modes
        self.input_stack = np.stack(modes.input_matrices)    # (M, n, p)
        self.mean_input = np.tensordot(modes.priors, self.input_stack, axes=1)
        self.started = False
        self.steps_done = 0
        self.pre_mean = np.array(system.x0_mean)
        self.pre_cov = np.array(system.x0_cov)
        self.x = np.zeros((modes.size, system.n))
        self.P = np.zeros((modes.size, system.n, system.n))
        self.posterior = ModePosterior.from_priors(modes.priors)

    def _begin_window(self, mean, cov):
        self.x[:] = mean
        self.P[:] = 0.5 * (cov + cov.T)
        self.posterior = ModePosterior.from_priors(self.modes.priors)
        self.steps_done = 0

    def _batched_update(self, y_k):
        sysm = self.system
        C = sysm.C
        S = C @ self.P @ C.T + sysm.Hv                      # (M, m, m)
        S = 0.5 * (S + np.transpose(S, (0, 2, 1)))
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            bad = self._first_singular(S)
            raise FilterNumericsError("singular innovation covariance", bad)
        innovations = y_k - self.x @ C.T                    # (M, m)
        PCt = self.P @ C.T                                  # (M, n, m)
        gain = np.transpose(np.linalg.solve(S, np.transpose(PCt, (0, 2, 1))),
                            (0, 2, 1))                      # (M, n, m)
        self.x = self.x + np.einsum("mij,mj->mi", gain, innovations)
        closed = np.eye(sysm.n) - gain @ C                  # (M, n, n)
        self.P = (closed @ self.P @ np.transpose(closed, (0, 2, 1))
                  + gain @ sysm.Hv @ np.transpose(gain, (0, 2, 1)))
        self.P = 0.5 * (self.P + np.transpose(self.P, (0, 2, 1)))
        self.posterior = posterior_update(self.posterior, innovations, S)

    def _first_singular(self, S) -> int:
        for i in range(S.shape[0]):
            try:
                np.linalg.cholesky(S[i])
            except np.linalg.LinAlgError:
                return i
        return 0

    def _batched_predict(self, u_prev):
        sysm = self.system
        drive = np.einsum("mij,j->mi", self.input_stack, u_prev)
        self.x = self.x @ sysm.A.T + drive
        self.P = sysm.A @ self.P @ sysm.A.T + sysm.Hw

    def _mixture_belief(self):
        pi = self.posterior.probs
        mean = pi @ self.x
        spread = self.x - mean
        cov = (np.tensordot(pi, self.P, axes=1)
               + (spread.T * pi) @ spread)
        return mean, 0.5 * (cov + cov.T)

    def step(self, k: int, u_prev, y_k):
        """Advance by one measurement; return the decided mode on completion."""
        if not self.started:
            if k > 0:
                # Idle phase: open-loop propagation of the start belief with
                # the prior-weighted input matrix, no measurements consumed.
                self.pre_mean = (self.system.A @ self.pre_mean
                                 + self.mean_input @ u_prev)
                self.pre_cov = (self.system.A @ self.pre_cov @ self.system.A.T
                                + self.system.Hw)
            if k < self.offset:
                return None
            self.started = True
            self._begin_window(self.pre_mean, self.pre_cov)
            self._batched_update(y_k)
            self.steps_done = 1
        else:
            self._batched_predict(u_prev)
            self._batched_update(y_k)
            self.steps_done += 1
        if self.steps_done == self.horizon:
            decision = decide(self.posterior)
            posterior = np.array(self.posterior.probs)
            mean, cov = self._mixture_belief()
            self._begin_window(mean, cov)
            return decision, posterior
        return None


class DetectorBank:
    """``horizon`` staggered detectors over the same measurement stream.

    Detector ``d`` opens its first window at step ``d``; every window spans
    ``horizon`` measurements, so for ``k >= horizon - 1`` exactly one
    detector completes per step. On restart a detector resets its posterior
    to the priors and re-seeds its filters from the moment-matched mixture of
    its own final filter states.
    """

    def __init__(self, system: LinearGaussianSystem, modes: ModeSet, horizon: int,
                 x0_mean=None, x0_cov=None):
        if horizon < 1:
            raise ValueError("detector horizon must be at least 1")
        if x0_mean is not None or x0_cov is not None:
            mean = system.x0_mean if x0_mean is None else x0_mean
            cov = system.x0_cov if x0_cov is None else x0_cov
            system = system.with_initial_belief(mean, cov)
        self.system = system
        self.modes = modes
        self.horizon = horizon
        self.detectors = [_Detector(d, d, system, modes, horizon)
                          for d in range(horizon)]
        self.k = 0

    @property
    def num_modes(self) -> int:
        return self.modes.size

    def step(self, y_k, u_prev=None) -> BankDecision | None:
        """Feed one measurement (and the previously applied input) to the bank."""
        y_k = _vector(y_k, "y_k", size=self.system.m)
        if self.k > 0:
            u_prev = _vector(u_prev, "u_prev", size=self.system.p)
        else:
            u_prev = np.zeros(self.system.p)
        decision = None
        for det in self.detectors:
            out = det.step(self.k, u_prev, y_k)
            if out is not None:
                mode, posterior = out
                decision = BankDecision(self.k, det.id, mode, posterior)
        self.k += 1
        return decision

    def posteriors(self) -> np.ndarray:
        """Current posterior of every detector, shape (horizon, num modes)."""
        return np.stack([det.posterior.probs for det in self.detectors])
