"""Exact Gaussian-process inference on Beta-warped inputs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from ._validation import check_targets, check_tasks, check_unit_points
from .kernels import (
    DEFAULT_JITTER,
    KernelParams,
    TaskCovariance,
    cross_matrix,
    kernel_dsqdist,
    scaled_sqdist,
    self_gram,
    task_matrix,
)
from .warping import WarpingParams, warp_jacobian_diag, warp_points

_LOG_2PI = math.log(2.0 * math.pi)
MAX_JITTER = 1e-4


class CholeskyError(np.linalg.LinAlgError):
    """The noisy Gram matrix stayed indefinite after jitter escalation."""


@dataclass(frozen=True)
class ObservationSet:
    """Training data: normalized inputs ``X`` (N, D), outputs ``y``, task labels."""

    X: np.ndarray
    y: np.ndarray
    tasks: np.ndarray | None = None
    num_tasks: int = 1

    def __post_init__(self):
        X = check_unit_points(self.X, allow_empty=True)
        y = check_targets(self.y, X.shape[0])
        if self.tasks is None and self.num_tasks == 1:
            tasks = None
        else:
            tasks = check_tasks(self.tasks, X.shape[0], self.num_tasks)
        for arr in (X, y, tasks):
            if arr is not None:
                arr.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "tasks", tasks)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def task_labels(self) -> np.ndarray:
        return np.zeros(self.n, dtype=np.int64) if self.tasks is None else self.tasks


@dataclass(frozen=True)
class HyperState:
    """One joint setting of every GP hyperparameter."""

    kernel: KernelParams
    noise: float
    mean: float
    warpings: tuple[WarpingParams, ...]
    task_cov: TaskCovariance | None = None

    def __post_init__(self):
        object.__setattr__(self, "warpings", tuple(self.warpings))
        object.__setattr__(self, "noise", float(self.noise))
        object.__setattr__(self, "mean", float(self.mean))
        if not (self.noise >= 0.0 and math.isfinite(self.noise)):
            raise ValueError("noise variance must be nonnegative and finite")
        if not math.isfinite(self.mean):
            raise ValueError("mean must be finite")
        if not self.warpings:
            raise ValueError("at least one warping is required")
        for w in self.warpings:
            if w.dim != self.kernel.dim:
                raise ValueError("warping dimension does not match the kernel")
        t = len(self.warpings)
        if self.task_cov is None:
            if t != 1:
                raise ValueError("a task covariance is required for more than one task")
        elif self.task_cov.num_tasks != t:
            raise ValueError("one warping per task is required")

    @property
    def num_tasks(self) -> int:
        return len(self.warpings)

    def task_cov_matrix(self) -> np.ndarray:
        if self.task_cov is None:
            return np.ones((1, 1))
        return task_matrix(self.task_cov)


def warp_by_task(X: np.ndarray, tasks: np.ndarray | None, warpings) -> np.ndarray:
    if len(warpings) == 1:
        return warp_points(X, warpings[0])
    W = np.empty_like(X, dtype=float)
    for t, w in enumerate(warpings):
        rows = tasks == t
        if np.any(rows):
            W[rows] = warp_points(X[rows], w)
    return W


def noisy_gram(W: np.ndarray, tasks: np.ndarray | None, h: HyperState, KT: np.ndarray) -> np.ndarray:
    K = self_gram(W, h.kernel)
    if h.task_cov is not None:
        K *= KT[np.ix_(tasks, tasks)]
    K[np.diag_indices_from(K)] += h.noise
    return K


def cholesky_with_jitter(K: np.ndarray, amplitude: float, jitter: float = DEFAULT_JITTER) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``K + jitter * amplitude * I``, escalating jitter x10 on failure."""
    diag = np.diag_indices_from(K)
    while True:
        Kj = K.copy()
        Kj[diag] += jitter * amplitude
        try:
            return np.linalg.cholesky(Kj), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > MAX_JITTER * (1.0 + 1e-9):
                raise CholeskyError("Gram matrix is not positive definite even with maximum jitter") from None


class PosteriorSample:
    """GP posterior for one :class:`HyperState`; immutable after construction."""

    def __init__(self, hyper: HyperState, chol: np.ndarray, alpha_vec: np.ndarray,
                 warped_X: np.ndarray, tasks: np.ndarray | None, jitter: float):
        self.hyper = hyper
        self.chol = chol
        self.alpha_vec = alpha_vec
        self.warped_X = warped_X
        self.tasks = tasks
        self.jitter = jitter
        self._KT = hyper.task_cov_matrix()
        for arr in (chol, alpha_vec, warped_X):
            arr.flags.writeable = False

    @property
    def n(self) -> int:
        return self.alpha_vec.size

    def predict_many(self, Xq: np.ndarray, task: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Predictive mean and variance (noise included) at rows of ``Xq``."""
        h = self.hyper
        Wq = warp_points(Xq, h.warpings[task])
        Kq = cross_matrix(Wq, self.warped_X, h.kernel)
        if h.task_cov is not None:
            Kq *= self._KT[task, self.tasks][None, :]
        mean = h.mean + Kq @ self.alpha_vec
        v = solve_triangular(self.chol, Kq.T, lower=True, check_finite=False)
        prior_var = h.kernel.amplitude * self._KT[task, task] + h.noise
        var = prior_var - np.einsum("ij,ij->j", v, v)
        return mean, np.maximum(var, 0.0)

    def predict_with_grad(self, Xq: np.ndarray, task: int = 0):
        """Mean, variance and their gradients w.r.t. the (unwarped) query inputs.

        Returns ``mean (m,), var (m,), dmean (m, D), dvar (m, D)``. The chain
        rule through the warping uses the Beta density at each coordinate.
        """
        h = self.hyper
        kp = h.kernel
        Wq = warp_points(Xq, h.warpings[task])
        J = warp_jacobian_diag(Xq, h.warpings[task])
        S = scaled_sqdist(Wq, self.warped_X, kp.length_scales)
        Kq = cross_matrix(Wq, self.warped_X, kp)
        dK_ds = kernel_dsqdist(S, kp)
        if h.task_cov is not None:
            tf = self._KT[task, self.tasks][None, :]
            Kq *= tf
            dK_ds *= tf
        mean = h.mean + Kq @ self.alpha_vec
        v = solve_triangular(self.chol, Kq.T, lower=True, check_finite=False)
        kinv_k = solve_triangular(self.chol.T, v, lower=False, check_finite=False).T  # (m, N)
        prior_var = kp.amplitude * self._KT[task, task] + h.noise
        var = prior_var - np.einsum("ij,ij->j", v, v)
        # dk/dW_d = dk/ds * 2 (W_d - W'_d) / l_d^2
        diff = (Wq[:, None, :] - self.warped_X[None, :, :]) * (2.0 / kp.length_scales**2)
        dK_dW = dK_ds[:, :, None] * diff  # (m, N, D)
        dmean = np.einsum("mnd,n->md", dK_dW, self.alpha_vec) * J
        dvar = -2.0 * np.einsum("mnd,mn->md", dK_dW, kinv_k) * J
        clipped = var <= 0.0
        var = np.maximum(var, 0.0)
        dvar[clipped] = 0.0
        return mean, var, dmean, dvar


def fit(obs: ObservationSet, h: HyperState, jitter: float = DEFAULT_JITTER) -> PosteriorSample:
    """Factorize the noisy Gram matrix and precompute the mean weights."""
    if obs.n < 1:
        raise ValueError("at least one observation is required")
    if obs.dim != h.kernel.dim:
        raise ValueError("observation dimension does not match the hyperparameters")
    if obs.num_tasks != h.num_tasks:
        raise ValueError("observation task count does not match the hyperparameters")
    return _fit_arrays(obs.X, obs.y, obs.tasks, h, jitter)


def _fit_arrays(X, y, tasks, h: HyperState, jitter: float = DEFAULT_JITTER) -> PosteriorSample:
    KT = h.task_cov_matrix()
    W = warp_by_task(X, tasks, h.warpings)
    K = noisy_gram(W, tasks, h, KT)
    L, used = cholesky_with_jitter(K, h.kernel.amplitude, jitter)
    alpha_vec = cho_solve((L, True), y - h.mean, check_finite=False)
    return PosteriorSample(h, L, alpha_vec, W, tasks, used)


def predict(ps: PosteriorSample, x, t: int = 0) -> tuple[float, float]:
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if x.shape[1] != ps.hyper.kernel.dim:
        raise ValueError("query dimension does not match the model")
    if not 0 <= t < ps.hyper.num_tasks:
        raise ValueError(f"task index {t} out of range")
    m, v = ps.predict_many(x, t)
    return float(m[0]), float(v[0])


def lml_from_posterior(ps: PosteriorSample, y: np.ndarray) -> float:
    r = y - ps.hyper.mean
    return float(-0.5 * r @ ps.alpha_vec - np.sum(np.log(np.diag(ps.chol))) - 0.5 * r.size * _LOG_2PI)


def log_marginal_likelihood(obs: ObservationSet, h: HyperState, jitter: float = DEFAULT_JITTER) -> float:
    """Gaussian log evidence of ``obs.y`` under the hyperparameters ``h``."""
    return lml_from_posterior(fit(obs, h, jitter), obs.y)
