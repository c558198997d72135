"""Mode-conditioned linear Gaussian systems and exact trajectory moments.

An actuator-blocking (denial-of-actuation) attack disables a subset of the
actuators, which zeroes the corresponding columns of the input matrix. Each
subset of blocked actuators is one "mode" of the plant, so a system with p
actuators has 2**p modes. This module defines the nominal system, the mode
enumeration, exact mean/covariance propagation of the stacked state and
output trajectories under a fixed input sequence, and seeded Monte-Carlo
rollouts used as an independent oracle for the analytic moments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SYMMETRY_RTOL = 1e-12
EIGENVALUE_FLOOR_RTOL = 1e-10
MAX_ACTUATORS = 12
PRIOR_SUM_TOL = 1e-12


class CapacityError(ValueError):
    """Mode enumeration would exceed the supported actuator count."""


class CovarianceFactorizationError(RuntimeError):
    """A covariance matrix is too indefinite to factor."""


def _matrix(value, name, rows=None, cols=None):
    arr = np.array(value, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-d matrix, got shape {arr.shape}")
    if rows is not None and arr.shape[0] != rows:
        raise ValueError(f"{name} must have {rows} rows, got {arr.shape[0]}")
    if cols is not None and arr.shape[1] != cols:
        raise ValueError(f"{name} must have {cols} columns, got {arr.shape[1]}")
    return arr


def _vector(value, name, size=None):
    arr = np.array(value, dtype=float).reshape(-1)
    if size is not None and arr.size != size:
        raise ValueError(f"{name} must have length {size}, got {arr.size}")
    return arr


def _check_covariance(mat, name):
    scale = max(1.0, float(np.abs(mat).max())) if mat.size else 1.0
    if mat.size and float(np.abs(mat - mat.T).max()) > SYMMETRY_RTOL * scale:
        raise ValueError(f"{name} must be symmetric")
    eigs = np.linalg.eigvalsh(0.5 * (mat + mat.T))
    trace = float(np.trace(mat))
    if float(eigs.min()) < -EIGENVALUE_FLOOR_RTOL * max(trace, 0.0):
        raise ValueError(f"{name} must be positive semi-definite")


def _freeze(arr):
    arr = np.ascontiguousarray(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LinearGaussianSystem:
    """Discrete-time linear plant driven by white Gaussian noise.

    The state evolves as ``x[k+1] = A x[k] + B u[k] + w[k]`` and is observed
    through ``y[k] = C x[k] + v[k]``. Process noise ``w`` and measurement
    noise ``v`` are zero mean with covariances ``Hw`` and ``Hv``; the initial
    state is Gaussian with mean ``x0_mean`` and covariance ``x0_cov``.
    Instances are immutable after construction.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Hw: np.ndarray
    Hv: np.ndarray
    x0_mean: np.ndarray
    x0_cov: np.ndarray

    def __post_init__(self):
        A = _matrix(self.A, "A")
        n = A.shape[0]
        if A.shape[1] != n:
            raise ValueError(f"A must be square, got shape {A.shape}")
        B = _matrix(self.B, "B", rows=n)
        C = _matrix(self.C, "C", cols=n)
        m = C.shape[0]
        Hw = _matrix(self.Hw, "Hw", rows=n, cols=n)
        Hv = _matrix(self.Hv, "Hv", rows=m, cols=m)
        x0_mean = _vector(self.x0_mean, "x0_mean", size=n)
        x0_cov = _matrix(self.x0_cov, "x0_cov", rows=n, cols=n)
        for mat, name in ((Hw, "Hw"), (Hv, "Hv"), (x0_cov, "x0_cov")):
            _check_covariance(mat, name)
        for name, value in (
            ("A", A), ("B", B), ("C", C), ("Hw", Hw), ("Hv", Hv),
            ("x0_mean", x0_mean), ("x0_cov", x0_cov),
        ):
            object.__setattr__(self, name, _freeze(value))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    @property
    def m(self) -> int:
        return self.C.shape[0]

    def with_initial_belief(self, mean, cov) -> "LinearGaussianSystem":
        """Same plant with a different initial-state belief."""
        return LinearGaussianSystem(self.A, self.B, self.C, self.Hw, self.Hv, mean, cov)

    def with_noise_scale(self, scale: float) -> "LinearGaussianSystem":
        """Same plant with every covariance multiplied by ``scale``."""
        if scale < 0:
            raise ValueError("noise scale must be non-negative")
        return LinearGaussianSystem(
            self.A, self.B, self.C,
            scale * self.Hw, scale * self.Hv,
            self.x0_mean, scale * self.x0_cov,
        )


def apply_mode_mask(B, mask) -> np.ndarray:
    """Return ``B`` with the columns of blocked actuators zeroed.

    ``mask[j]`` true means actuator ``j`` is blocked; unmasked columns are
    copied unchanged.
    """
    B = _matrix(B, "B")
    mask = np.asarray(mask).reshape(-1).astype(bool)
    if mask.size != B.shape[1]:
        raise ValueError(
            f"mask length {mask.size} does not match input count {B.shape[1]}"
        )
    out = B.copy()
    out[:, mask] = 0.0
    return out


@dataclass(frozen=True)
class ModeEntry:
    """One attack hypothesis: its mask, masked input matrix and prior."""

    index: int
    mask: tuple
    input_matrix: np.ndarray
    prior: float


@dataclass(frozen=True)
class ModeSet:
    """All attack hypotheses of a plant.

    ``masks[i]`` is a boolean tuple over actuators (true = blocked),
    ``input_matrices[i]`` the nominal input matrix with those columns zeroed,
    and ``priors[i]`` the prior probability of hypothesis ``i``. Index 0 is
    the attack-free hypothesis by convention.
    """

    masks: tuple
    input_matrices: tuple
    priors: np.ndarray

    def __post_init__(self):
        masks = tuple(tuple(bool(b) for b in mask) for mask in self.masks)
        if not masks:
            raise ValueError("a mode set needs at least one mode")
        p = len(masks[0])
        if any(len(mask) != p for mask in masks):
            raise ValueError("all masks must have the same length")
        if len(set(masks)) != len(masks):
            raise ValueError("masks must be pairwise distinct")
        if any(masks[0]):
            raise ValueError("mode 0 must be the attack-free (all-false) mask")
        mats = tuple(_matrix(mat, f"input_matrices[{i}]", cols=p)
                     for i, mat in enumerate(self.input_matrices))
        if len(mats) != len(masks):
            raise ValueError("one input matrix per mask is required")
        base = mats[0]
        for i, (mask, mat) in enumerate(zip(masks, mats)):
            expected = apply_mode_mask(base, mask)
            if mat.shape != base.shape or not np.array_equal(mat, expected):
                raise ValueError(f"input_matrices[{i}] does not match its mask")
        priors = _vector(self.priors, "priors", size=len(masks))
        if np.any(priors < 0):
            raise ValueError("priors must be non-negative")
        if abs(float(priors.sum()) - 1.0) > PRIOR_SUM_TOL:
            raise ValueError("priors must sum to 1")
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "input_matrices", tuple(_freeze(m) for m in mats))
        object.__setattr__(self, "priors", _freeze(priors))

    @property
    def size(self) -> int:
        return len(self.masks)

    @property
    def p(self) -> int:
        return len(self.masks[0])

    @property
    def base_input_matrix(self) -> np.ndarray:
        return self.input_matrices[0]

    def entry(self, index: int) -> ModeEntry:
        return ModeEntry(index, self.masks[index], self.input_matrices[index],
                         float(self.priors[index]))

    def __len__(self) -> int:
        return self.size

    def __iter__(self):
        return (self.entry(i) for i in range(self.size))

    def mask_strings(self) -> list:
        return [mask_to_string(mask) for mask in self.masks]


def enumerate_modes(B, priors) -> ModeSet:
    """Enumerate all 2**p actuator-blocking hypotheses of ``B``.

    Masks come in binary-counting order: bit ``j`` of the mode index selects
    actuator ``j``, so index 0 is attack-free and the last index blocks every
    actuator.
    """
    B = _matrix(B, "B")
    p = B.shape[1]
    if p > MAX_ACTUATORS:
        raise CapacityError(
            f"{p} actuators would give {2 ** p} modes; the supported maximum is "
            f"{MAX_ACTUATORS} actuators"
        )
    priors = _vector(priors, "priors", size=2 ** p)
    masks = []
    mats = []
    for index in range(2 ** p):
        mask = tuple(bool((index >> j) & 1) for j in range(p))
        masks.append(mask)
        mats.append(apply_mode_mask(B, mask))
    return ModeSet(tuple(masks), tuple(mats), priors)


def uniform_priors(p: int) -> np.ndarray:
    return np.full(2 ** p, 2.0 ** -p)


@dataclass(frozen=True)
class ControlSequence:
    """Stacked input sequence ``[u_0; ...; u_{N-1}]`` of length ``p * N``."""

    u: np.ndarray
    horizon: int
    input_dim: int

    def __post_init__(self):
        u = _vector(self.u, "u")
        if self.horizon < 0 or self.input_dim <= 0:
            raise ValueError("horizon must be >= 0 and input_dim positive")
        if u.size != self.horizon * self.input_dim:
            raise ValueError(
                f"stacked input must have length {self.horizon * self.input_dim}, "
                f"got {u.size}"
            )
        object.__setattr__(self, "u", _freeze(u))

    @classmethod
    def zeros(cls, input_dim: int, horizon: int) -> "ControlSequence":
        return cls(np.zeros(input_dim * horizon), horizon, input_dim)

    @classmethod
    def from_blocks(cls, blocks) -> "ControlSequence":
        blocks = np.atleast_2d(np.asarray(blocks, dtype=float))
        return cls(blocks.reshape(-1), blocks.shape[0], blocks.shape[1])

    def blocks(self) -> np.ndarray:
        return self.u.reshape(self.horizon, self.input_dim)


def control_vector(u, input_dim: int, horizon: int) -> np.ndarray:
    """Coerce ``u`` (ControlSequence or array) into a flat length p*N vector."""
    if isinstance(u, ControlSequence):
        if u.input_dim != input_dim or u.horizon != horizon:
            raise ValueError("control sequence shape does not match the request")
        return np.asarray(u.u, dtype=float)
    arr = _vector(u, "u")
    if arr.size != input_dim * horizon:
        raise ValueError(
            f"stacked input must have length {input_dim * horizon}, got {arr.size}"
        )
    return arr


@dataclass(frozen=True)
class TrajectoryMoments:
    """Exact Gaussian moments of the stacked state and output paths.

    ``x_mean`` stacks the per-step state means over steps ``0..horizon`` and
    ``x_cov`` holds every cross-time block, so block ``(k, l)`` is the
    covariance between the states at steps ``k`` and ``l``. Output moments
    follow by pushing through the output map; measurement noise enters only
    the diagonal output blocks. The state covariance depends on neither the
    input sequence nor the mode.
    """

    mode: int
    horizon: int
    state_dim: int
    output_dim: int
    x_mean: np.ndarray
    x_cov: np.ndarray
    y_mean: np.ndarray
    y_cov: np.ndarray

    def x_mean_block(self, k: int) -> np.ndarray:
        n = self.state_dim
        return self.x_mean[k * n:(k + 1) * n]

    def x_cov_block(self, k: int, l: int) -> np.ndarray:
        n = self.state_dim
        return self.x_cov[k * n:(k + 1) * n, l * n:(l + 1) * n]

    def y_mean_block(self, k: int) -> np.ndarray:
        m = self.output_dim
        return self.y_mean[k * m:(k + 1) * m]

    def y_cov_block(self, k: int, l: int) -> np.ndarray:
        m = self.output_dim
        return self.y_cov[k * m:(k + 1) * m, l * m:(l + 1) * m]


def propagate_moments(system: LinearGaussianSystem, mode: ModeEntry, u,
                      horizon: int) -> TrajectoryMoments:
    """Propagate exact trajectory moments for one mode under inputs ``u``.

    Means follow the deterministic recursion with the mode's masked input
    matrix. Covariance blocks use the stationary-free recursion
    ``H(l, l) = A H(l-1, l-1) A' + Hw`` together with
    ``H(k, l) = A^(k-l) H(l, l)`` for ``k >= l``, which is numerically
    stabler than summing explicit matrix powers.
    """
    N = int(horizon)
    if N < 0:
        raise ValueError("horizon must be non-negative")
    n, m, p = system.n, system.m, system.p
    Bm = _matrix(mode.input_matrix, "mode input matrix", rows=n, cols=p)
    u = control_vector(u, p, N)
    ublocks = u.reshape(N, p)
    A, C = system.A, system.C
    K = N + 1

    x_mean = np.zeros((K, n))
    x_mean[0] = system.x0_mean
    for k in range(N):
        x_mean[k + 1] = A @ x_mean[k] + Bm @ ublocks[k]

    diag = [np.array(system.x0_cov)]
    for _ in range(N):
        nxt = A @ diag[-1] @ A.T + system.Hw
        diag.append(0.5 * (nxt + nxt.T))

    x_cov = np.zeros((K * n, K * n))
    for l in range(K):
        x_cov[l * n:(l + 1) * n, l * n:(l + 1) * n] = diag[l]
        cross = diag[l]
        for k in range(l + 1, K):
            cross = A @ cross
            x_cov[k * n:(k + 1) * n, l * n:(l + 1) * n] = cross
            x_cov[l * n:(l + 1) * n, k * n:(k + 1) * n] = cross.T

    y_mean = x_mean @ C.T
    y_cov = np.zeros((K * m, K * m))
    for l in range(K):
        for k in range(l, K):
            blk = C @ x_cov[k * n:(k + 1) * n, l * n:(l + 1) * n] @ C.T
            if k == l:
                blk = blk + system.Hv
            y_cov[k * m:(k + 1) * m, l * m:(l + 1) * m] = blk
            if k != l:
                y_cov[l * m:(l + 1) * m, k * m:(k + 1) * m] = blk.T

    return TrajectoryMoments(
        mode=mode.index, horizon=N, state_dim=n, output_dim=m,
        x_mean=_freeze(x_mean.reshape(-1)), x_cov=_freeze(x_cov),
        y_mean=_freeze(y_mean.reshape(-1)), y_cov=_freeze(y_cov),
    )


def psd_sqrt(mat, name: str = "covariance") -> np.ndarray:
    """Symmetric square root of a PSD matrix.

    Eigenvalues slightly below zero (within the PSD tolerance relative to the
    trace) are clamped to zero; anything more negative raises
    CovarianceFactorizationError.
    """
    sym = 0.5 * (np.asarray(mat, dtype=float) + np.asarray(mat, dtype=float).T)
    w, V = np.linalg.eigh(sym)
    trace = float(np.trace(sym))
    floor = -EIGENVALUE_FLOOR_RTOL * max(trace, 0.0)
    if float(w.min()) < floor:
        raise CovarianceFactorizationError(
            f"{name} is not positive semi-definite (min eigenvalue {w.min():.3e})"
        )
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def sample_rollout(system: LinearGaussianSystem, mode: ModeEntry, u,
                   horizon: int, rng_seed: int):
    """Simulate one noisy trajectory; the same seed gives the same paths.

    Returns ``(states, outputs)`` with shapes ``(horizon + 1, n)`` and
    ``(horizon + 1, m)``.
    """
    states, outputs = sample_rollouts(system, mode, u, horizon, 1, rng_seed)
    return states[0], outputs[0]


def sample_rollouts(system: LinearGaussianSystem, mode: ModeEntry, u,
                    horizon: int, n_samples: int, rng_seed: int):
    """Vectorized seeded rollouts, shapes ``(n_samples, horizon + 1, dim)``."""
    N = int(horizon)
    if N < 0:
        raise ValueError("horizon must be non-negative")
    n, m, p = system.n, system.m, system.p
    Bm = _matrix(mode.input_matrix, "mode input matrix", rows=n, cols=p)
    u = control_vector(u, p, N).reshape(N, p)
    rng = np.random.default_rng(rng_seed)
    L0 = psd_sqrt(system.x0_cov, "x0_cov")
    Lw = psd_sqrt(system.Hw, "Hw")
    Lv = psd_sqrt(system.Hv, "Hv")

    z0 = rng.standard_normal((n_samples, n))
    zw = rng.standard_normal((N, n_samples, n))
    zv = rng.standard_normal((N + 1, n_samples, m))

    states = np.empty((N + 1, n_samples, n))
    states[0] = system.x0_mean + z0 @ L0.T
    for k in range(N):
        drive = Bm @ u[k]
        states[k + 1] = states[k] @ system.A.T + drive + zw[k] @ Lw.T
    outputs = states @ system.C.T + zv @ Lv.T
    return states.transpose(1, 0, 2), outputs.transpose(1, 0, 2)


def mask_to_string(mask) -> str:
    return "".join("1" if bool(b) else "0" for b in mask)


def mask_from_string(text: str) -> tuple:
    if not text or any(ch not in "01" for ch in text):
        raise ValueError(f"mask string must be non-empty over 0/1, got {text!r}")
    return tuple(ch == "1" for ch in text)


def system_to_json(system: LinearGaussianSystem, modes: ModeSet | None = None) -> dict:
    """Serialize a plant (and optionally its mode set) to a JSON document.

    Matrices are row-major nested arrays, masks are bit strings, priors are
    plain floats.
    """
    doc = {
        "system": {
            "A": system.A.tolist(),
            "B": system.B.tolist(),
            "C": system.C.tolist(),
            "Hw": system.Hw.tolist(),
            "Hv": system.Hv.tolist(),
            "x0_mean": system.x0_mean.tolist(),
            "x0_cov": system.x0_cov.tolist(),
        }
    }
    if modes is not None:
        doc["modes"] = {
            "masks": modes.mask_strings(),
            "priors": [float(v) for v in modes.priors],
        }
    return doc


def system_from_json(doc: dict):
    """Inverse of :func:`system_to_json`; returns ``(system, modes_or_None)``."""
    try:
        sys_doc = doc["system"]
        system = LinearGaussianSystem(
            A=sys_doc["A"], B=sys_doc["B"], C=sys_doc["C"],
            Hw=sys_doc["Hw"], Hv=sys_doc["Hv"],
            x0_mean=sys_doc["x0_mean"], x0_cov=sys_doc["x0_cov"],
        )
    except KeyError as exc:
        raise ValueError(f"system document is missing key {exc}") from exc
    modes = None
    if "modes" in doc:
        mode_doc = doc["modes"]
        masks = tuple(mask_from_string(s) for s in mode_doc["masks"])
        mats = tuple(apply_mode_mask(system.B, mask) for mask in masks)
        modes = ModeSet(masks, mats, np.asarray(mode_doc["priors"], dtype=float))
    return system, modes
