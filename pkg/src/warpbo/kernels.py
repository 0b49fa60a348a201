"""ARD covariance functions and the multi-task product kernel.

Both stationary kernels are functions of the scaled squared distance
``s = sum_d (x_d - x'_d)^2 / l_d^2``::

    SE:        amp * exp(-s)
    Matern52:  amp * (1 + sqrt(5 s) + 5 s / 3) * exp(-sqrt(5 s))

Warping is the caller's job: every function here works on coordinates that
have already been pushed through the task's Beta-CDF warping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

SE_ARD = "se"
MATERN52_ARD = "matern52"
KERNEL_FAMILIES = (SE_ARD, MATERN52_ARD)

DEFAULT_JITTER = 1e-8

_SQRT5 = math.sqrt(5.0)


@dataclass(frozen=True)
class KernelParams:
    amplitude: float
    length_scales: np.ndarray
    family: str = MATERN52_ARD

    def __post_init__(self):
        ls = np.array(self.length_scales, dtype=float).reshape(-1)
        ls.flags.writeable = False
        object.__setattr__(self, "length_scales", ls)
        object.__setattr__(self, "amplitude", float(self.amplitude))
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; choose from {KERNEL_FAMILIES}")
        if not (math.isfinite(self.amplitude) and self.amplitude > 0):
            raise ValueError("amplitude must be positive and finite")
        if ls.size == 0 or not np.all(np.isfinite(ls)) or np.any(ls <= 0):
            raise ValueError("length scales must be positive and finite")

    @property
    def dim(self) -> int:
        return self.length_scales.size

    def __eq__(self, other):
        if not isinstance(other, KernelParams):
            return NotImplemented
        return (self.family == other.family and self.amplitude == other.amplitude
                and np.array_equal(self.length_scales, other.length_scales))


@dataclass(frozen=True)
class TaskCovariance:
    """Task covariance ``S L L^T S`` with ``L`` built from spherical angles.

    Row ``i`` of ``L`` uses angles ``angles[i(i-1)/2 : i(i+1)/2]``, so the
    angle vector has ``T(T-1)/2`` entries in ``(0, pi)``.
    """

    num_tasks: int
    angles: np.ndarray = field(default_factory=lambda: np.zeros(0))
    scales: np.ndarray | None = None

    def __post_init__(self):
        t = int(self.num_tasks)
        if t < 1:
            raise ValueError("num_tasks must be at least 1")
        ang = np.array(self.angles, dtype=float).reshape(-1)
        if ang.size != t * (t - 1) // 2:
            raise ValueError(f"expected {t * (t - 1) // 2} angles, got {ang.size}")
        if np.any(ang <= 0) or np.any(ang >= math.pi):
            raise ValueError("angles must lie in (0, pi)")
        sc = np.ones(t) if self.scales is None else np.array(self.scales, dtype=float).reshape(-1)
        if sc.size != t or np.any(sc <= 0) or not np.all(np.isfinite(sc)):
            raise ValueError("scales must be T positive finite values")
        ang.flags.writeable = False
        sc.flags.writeable = False
        object.__setattr__(self, "num_tasks", t)
        object.__setattr__(self, "angles", ang)
        object.__setattr__(self, "scales", sc)

    def __eq__(self, other):
        if not isinstance(other, TaskCovariance):
            return NotImplemented
        return (self.num_tasks == other.num_tasks and np.array_equal(self.angles, other.angles)
                and np.array_equal(self.scales, other.scales))


def _check_dim(x: np.ndarray, kp: KernelParams) -> None:
    if x.shape[-1] != kp.dim:
        raise ValueError(f"points have dimension {x.shape[-1]}, kernel expects {kp.dim}")


_FAMILY_CODE = {SE_ARD: 0, MATERN52_ARD: 1}


@nb.njit(cache=True, inline="always")
def _k_scalar(s, amp, fam):
    if fam == 0:
        return amp * math.exp(-s)
    r5 = math.sqrt(5.0 * s)
    return amp * (1.0 + r5 + (5.0 / 3.0) * s) * math.exp(-r5)


@nb.njit(cache=True)
def _cross_kernel(A, B, ls, amp, fam):
    n, m, d = A.shape[0], B.shape[0], A.shape[1]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for k in range(d):
                t = (A[i, k] - B[j, k]) / ls[k]
                s += t * t
            out[i, j] = _k_scalar(s, amp, fam)
    return out


@nb.njit(cache=True)
def _gram_kernel(A, ls, amp, fam):
    n, d = A.shape[0], A.shape[1]
    out = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            s = 0.0
            for k in range(d):
                t = (A[i, k] - A[j, k]) / ls[k]
                s += t * t
            v = _k_scalar(s, amp, fam)
            out[i, j] = v
            out[j, i] = v
    return out


def scaled_sqdist(A: np.ndarray, B: np.ndarray, length_scales: np.ndarray) -> np.ndarray:
    """Pairwise ``sum_d ((a_d - b_d) / l_d)^2`` for ``(n, D)`` and ``(m, D)`` arrays."""
    diff = (A[:, None, :] - B[None, :, :]) / length_scales
    return np.einsum("ijk,ijk->ij", diff, diff)


def kernel_from_sqdist(s: np.ndarray, kp: KernelParams) -> np.ndarray:
    if kp.family == SE_ARD:
        return kp.amplitude * np.exp(-s)
    r5 = np.sqrt(5.0 * s)
    return kp.amplitude * (1.0 + r5 + (5.0 / 3.0) * s) * np.exp(-r5)


def kernel_dsqdist(s: np.ndarray, kp: KernelParams) -> np.ndarray:
    """Derivative of the kernel with respect to the scaled squared distance."""
    if kp.family == SE_ARD:
        return -kp.amplitude * np.exp(-s)
    r5 = np.sqrt(5.0 * s)
    return -kp.amplitude * (5.0 / 6.0) * (1.0 + r5) * np.exp(-r5)


def kernel_eval(x, x2, kp: KernelParams) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    x2 = np.asarray(x2, dtype=float).reshape(-1)
    _check_dim(x, kp)
    _check_dim(x2, kp)
    return float(cross_matrix(x[None, :], x2[None, :], kp)[0, 0])


def cross_matrix(A: np.ndarray, B: np.ndarray, kp: KernelParams) -> np.ndarray:
    """Kernel matrix between the rows of ``A`` and ``B``."""
    return _cross_kernel(np.ascontiguousarray(A, dtype=float), np.ascontiguousarray(B, dtype=float),
                         kp.length_scales, kp.amplitude, _FAMILY_CODE[kp.family])


def self_gram(A: np.ndarray, kp: KernelParams) -> np.ndarray:
    """Noise-free ``K(A, A)``; upper triangle computed and mirrored."""
    return _gram_kernel(np.ascontiguousarray(A, dtype=float), kp.length_scales, kp.amplitude,
                        _FAMILY_CODE[kp.family])


def gram_matrix(X, kp: KernelParams, jitter: float = DEFAULT_JITTER) -> np.ndarray:
    """Symmetric Gram matrix with ``jitter * amplitude`` added to the diagonal."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    _check_dim(X, kp)
    K = self_gram(X, kp)
    K[np.diag_indices_from(K)] += jitter * kp.amplitude
    return K


def cross_covariance(X, x, kp: KernelParams) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(1, -1)
    _check_dim(x, kp)
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return np.zeros(0)
    _check_dim(X, kp)
    return cross_matrix(X, x, kp)[:, 0]


def spherical_factor(num_tasks: int, angles: np.ndarray) -> np.ndarray:
    """Lower-triangular ``L`` with unit-norm rows from spherical angles."""
    L = np.zeros((num_tasks, num_tasks))
    L[0, 0] = 1.0
    k = 0
    for i in range(1, num_tasks):
        prod = 1.0
        for j in range(i):
            L[i, j] = prod * math.cos(angles[k])
            prod *= math.sin(angles[k])
            k += 1
        L[i, i] = prod
    return L


def task_matrix(tc: TaskCovariance) -> np.ndarray:
    L = spherical_factor(tc.num_tasks, tc.angles)
    C = L @ L.T
    C = 0.5 * (C + C.T)
    return np.outer(tc.scales, tc.scales) * C


def joint_kernel_eval(x, t: int, x2, t2: int, kp: KernelParams, tc: TaskCovariance) -> float:
    """Product kernel ``K_T[t, t2] * k(x, x2)`` on already-warped points."""
    for idx in (t, t2):
        if not 0 <= int(idx) < tc.num_tasks:
            raise ValueError(f"task index {idx} out of range [0, {tc.num_tasks})")
    return float(task_matrix(tc)[t, t2]) * kernel_eval(x, x2, kp)
