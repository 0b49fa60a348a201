"""Univariate slice sampling over GP hyperparameters.

Positive hyperparameters are updated in log space, one coordinate at a time,
with the stepping-out and shrinkage procedure. The target is the GP log
marginal likelihood plus the log hyperpriors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import cho_solve

from .gp import CholeskyError, HyperState, ObservationSet, cholesky_with_jitter
from .kernels import _FAMILY_CODE, KernelParams, TaskCovariance, _gram_kernel, spherical_factor
from .special import SHAPE_MAX, SHAPE_MIN, betainc
from .warping import WarpingParams, default_prior, prior_arrays

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_LOG_2PI = math.log(2.0 * math.pi)
_LOG_BOUND = 12.0
_LOG_SHAPE_LO = math.log(SHAPE_MIN)
_LOG_SHAPE_HI = math.log(SHAPE_MAX)
_MIN_WIDTH = 1e-12


class SliceCollapseError(RuntimeError):
    """Shrinkage reduced the bracket to nothing without finding a point on the slice."""


@dataclass(frozen=True)
class SamplerConfig:
    burn_in: int = 50
    num_samples: int = 10
    thin: int = 1
    max_stepout: int = 8
    initial_width: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        for name in ("num_samples", "thin", "max_stepout"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.initial_width > 0:
            raise ValueError("initial_width must be positive")


@dataclass(frozen=True)
class HyperPriors:
    """Hyperpriors; ``(mu, sigma)`` pairs are log-normal unless noted.

    ``warping_priors`` holds one entry per task (a :class:`WarpingPrior` or a
    per-dimension list of them). ``None`` pins every warping to the identity.
    ``mean_prior`` is a normal law on the constant mean. Task correlation
    angles are uniform on ``(0, pi)``. ``task_scale_prior=None`` fixes the
    task scales at 1.
    """

    warping_priors: tuple | None = (default_prior(),)
    length_scale_prior: tuple[float, float] = (0.0, 1.0)
    amplitude_prior: tuple[float, float] = (0.0, 1.0)
    noise_prior: tuple[float, float] = (-6.0, 2.0)
    mean_prior: tuple[float, float] = (0.0, 1.0)
    task_scale_prior: tuple[float, float] | None = None

    @property
    def warping_enabled(self) -> bool:
        return self.warping_priors is not None

    @classmethod
    def for_tasks(cls, num_tasks: int, warping_prior=None, warping: bool = True, **kw) -> "HyperPriors":
        if not warping:
            return cls(warping_priors=None, **kw)
        wp = default_prior() if warping_prior is None else warping_prior
        return cls(warping_priors=(wp,) * num_tasks, **kw)


def slice_sample_1d(
    log_density: Callable[[float], float],
    x0: float,
    width: float,
    max_stepout: int,
    rng: np.random.Generator,
    logp0: float | None = None,
    return_logp: bool = False,
):
    """One stepping-out / shrinkage slice-sampling transition from ``x0``."""
    if logp0 is None:
        logp0 = log_density(x0)
    if not math.isfinite(logp0):
        raise ValueError("log density at the starting point must be finite")
    level = logp0 - rng.exponential()
    left = x0 - width * rng.uniform()
    right = left + width
    j = int(math.floor(max_stepout * rng.uniform()))
    k = max_stepout - 1 - j
    while j > 0 and log_density(left) > level:
        left -= width
        j -= 1
    while k > 0 and log_density(right) > level:
        right += width
        k -= 1
    while True:
        x1 = left + (right - left) * rng.uniform()
        lp1 = log_density(x1)
        if lp1 > level:
            return (x1, lp1) if return_logp else x1
        if x1 < x0:
            left = x1
        else:
            right = x1
        if right - left < _MIN_WIDTH:
            raise SliceCollapseError("slice bracket collapsed; log density may be pathological")


def _normal_logpdf(z, mu, sigma):
    return -math.log(sigma) - _LOG_SQRT_2PI - 0.5 * ((z - mu) / sigma) ** 2


class _Layout:
    """Maps a HyperState to the flat vector of sampled coordinates and back."""

    def __init__(self, dim: int, num_tasks: int, priors: HyperPriors):
        self.dim = dim
        self.num_tasks = num_tasks
        self.warp = priors.warping_enabled
        self.task_scales = priors.task_scale_prior is not None and num_tasks > 1
        i = 0
        self.amp = i
        i += 1
        self.ls = slice(i, i + dim)
        i += dim
        self.noise = i
        i += 1
        self.mean = i
        i += 1
        if self.warp:
            # per task, per dim: (log alpha_d, log beta_d) interleaved
            self.warp_slice = slice(i, i + 2 * dim * num_tasks)
            i += 2 * dim * num_tasks
        self.n_angles = num_tasks * (num_tasks - 1) // 2
        self.angles = slice(i, i + self.n_angles)
        i += self.n_angles
        if self.task_scales:
            self.scales = slice(i, i + num_tasks)
            i += num_tasks
        self.size = i

        lo = np.full(self.size, -_LOG_BOUND)
        hi = np.full(self.size, _LOG_BOUND)
        lo[self.noise] = -30.0
        hi[self.noise] = 5.0
        lo[self.mean] = -np.inf
        hi[self.mean] = np.inf
        if self.warp:
            lo[self.warp_slice] = _LOG_SHAPE_LO
            hi[self.warp_slice] = _LOG_SHAPE_HI
        lo[self.angles] = 0.0
        hi[self.angles] = math.pi
        self.lower = lo
        self.upper = hi

    def warp_coord(self, task: int, d: int, which: int) -> int:
        return self.warp_slice.start + task * 2 * self.dim + 2 * d + which

    def pack(self, h: HyperState) -> np.ndarray:
        z = np.empty(self.size)
        z[self.amp] = math.log(h.kernel.amplitude)
        z[self.ls] = np.log(h.kernel.length_scales)
        z[self.noise] = math.log(max(h.noise, 1e-300))
        z[self.mean] = h.mean
        if self.warp:
            for t, w in enumerate(h.warpings):
                base = self.warp_slice.start + t * 2 * self.dim
                z[base:base + 2 * self.dim:2] = np.log(w.alpha)
                z[base + 1:base + 2 * self.dim:2] = np.log(w.beta)
        if self.n_angles:
            z[self.angles] = h.task_cov.angles
        if self.task_scales:
            z[self.scales] = np.log(h.task_cov.scales)
        return z

    def unpack(self, z: np.ndarray, family: str, fixed_scales=None) -> HyperState:
        kp = KernelParams(math.exp(z[self.amp]), np.exp(z[self.ls]), family)
        if self.warp:
            ws = []
            for t in range(self.num_tasks):
                base = self.warp_slice.start + t * 2 * self.dim
                ws.append(WarpingParams(np.exp(z[base:base + 2 * self.dim:2]),
                                        np.exp(z[base + 1:base + 2 * self.dim:2])))
        else:
            ws = [WarpingParams.identity(self.dim)] * self.num_tasks
        tc = None
        if self.num_tasks > 1:
            scales = np.exp(z[self.scales]) if self.task_scales else fixed_scales
            tc = TaskCovariance(self.num_tasks, z[self.angles].copy(), scales)
        return HyperState(kp, math.exp(z[self.noise]), float(z[self.mean]), tuple(ws), tc)


class _Target:
    """Unnormalized log posterior over the flat coordinate vector."""

    def __init__(self, obs: ObservationSet, priors: HyperPriors, layout: _Layout,
                 family: str, fixed_scales, prior_only: bool):
        self.obs = obs
        self.priors = priors
        self.layout = layout
        self.family = family
        self.fixed_scales = fixed_scales
        self.prior_only = prior_only
        self.fam = _FAMILY_CODE[family]
        self.X = np.ascontiguousarray(obs.X)
        self.y = obs.y
        tasks = obs.task_labels()
        self.task_rows = [np.flatnonzero(tasks == t) for t in range(layout.num_tasks)]
        self.task_index = np.ix_(tasks, tasks)
        self.W = self.X.copy()
        self._shape_cache = [[(1.0, 1.0)] * layout.dim for _ in range(layout.num_tasks)]
        if layout.warp:
            if len(priors.warping_priors) != layout.num_tasks:
                raise ValueError("need one warping prior per task")
            mu = np.empty(2 * layout.dim * layout.num_tasks)
            sd = np.empty_like(mu)
            for t, p in enumerate(priors.warping_priors):
                ma, sa, mb, sb = prior_arrays(p, layout.dim)
                base = t * 2 * layout.dim
                mu[base:base + 2 * layout.dim:2] = ma
                mu[base + 1:base + 2 * layout.dim:2] = mb
                sd[base:base + 2 * layout.dim:2] = sa
                sd[base + 1:base + 2 * layout.dim:2] = sb
            self.warp_mu = mu
            self.warp_sd = sd

    def log_prior(self, z: np.ndarray) -> float:
        L, p = self.layout, self.priors
        if np.any(z < L.lower) or np.any(z > L.upper):
            return -math.inf
        lp = _normal_logpdf(z[L.amp], *p.amplitude_prior)
        mu, sd = p.length_scale_prior
        ls = z[L.ls]
        lp += float(np.sum(-math.log(sd) - _LOG_SQRT_2PI - 0.5 * ((ls - mu) / sd) ** 2))
        lp += _normal_logpdf(z[L.noise], *p.noise_prior)
        lp += _normal_logpdf(z[L.mean], *p.mean_prior)
        if L.warp:
            wz = z[L.warp_slice]
            lp += float(np.sum(-np.log(self.warp_sd) - _LOG_SQRT_2PI - 0.5 * ((wz - self.warp_mu) / self.warp_sd) ** 2))
        if L.task_scales:
            mu, sd = p.task_scale_prior
            sz = z[L.scales]
            lp += float(np.sum(-math.log(sd) - _LOG_SQRT_2PI - 0.5 * ((sz - mu) / sd) ** 2))
        return lp

    def _warped(self, z: np.ndarray) -> np.ndarray:
        L = self.layout
        if not L.warp:
            return self.X
        for t in range(L.num_tasks):
            rows = self.task_rows[t]
            for d in range(L.dim):
                a = math.exp(z[L.warp_coord(t, d, 0)])
                b = math.exp(z[L.warp_coord(t, d, 1)])
                if self._shape_cache[t][d] != (a, b):
                    self.W[rows, d] = betainc(self.X[rows, d], a, b)
                    self._shape_cache[t][d] = (a, b)
        return self.W

    def log_likelihood(self, z: np.ndarray) -> float:
        L = self.layout
        amp = math.exp(z[L.amp])
        ls = np.exp(z[L.ls])
        W = self._warped(z)
        K = _gram_kernel(W, ls, amp, self.fam)
        if L.num_tasks > 1:
            C = spherical_factor(L.num_tasks, z[L.angles])
            KT = C @ C.T
            sc = np.exp(z[L.scales]) if L.task_scales else self.fixed_scales
            KT = 0.5 * (KT + KT.T) * np.outer(sc, sc)
            K *= KT[self.task_index]
        K[np.diag_indices_from(K)] += math.exp(z[L.noise])
        chol, _ = cholesky_with_jitter(K, amp)
        r = self.y - z[L.mean]
        alpha = cho_solve((chol, True), r, check_finite=False)
        return float(-0.5 * r @ alpha - np.sum(np.log(np.diag(chol))) - 0.5 * r.size * _LOG_2PI)

    def __call__(self, z: np.ndarray) -> float:
        lp = self.log_prior(z)
        if not math.isfinite(lp) or self.prior_only:
            return lp
        try:
            ll = self.log_likelihood(z)
        except CholeskyError:
            return -math.inf
        return lp + ll if math.isfinite(ll) else -math.inf


def sample_hypers(
    obs: ObservationSet,
    priors: HyperPriors,
    cfg: SamplerConfig,
    init: HyperState,
    rng: np.random.Generator | None = None,
    prior_only: bool = False,
) -> list[HyperState]:
    """Run ``burn_in`` discarded sweeps, then keep every ``thin``-th of the next sweeps.

    Each sweep performs one slice update per sampled scalar coordinate, in a
    fixed order. Returns exactly ``cfg.num_samples`` states.
    """
    if obs.n < 1:
        raise ValueError("at least one observation is required")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    layout = _Layout(obs.dim, init.num_tasks, priors)
    fixed_scales = None if init.task_cov is None else init.task_cov.scales
    target = _Target(obs, priors, layout, init.kernel.family, fixed_scales, prior_only)

    z = layout.pack(init)
    z = np.clip(z, layout.lower + 1e-9, layout.upper - 1e-9)
    logp = target(z)
    if not math.isfinite(logp):
        # Fall back to a well-conditioned starting point.
        z[layout.noise] = min(max(z[layout.noise], -10.0), 0.0)
        z[layout.amp] = 0.0
        logp = target(z)
        if not math.isfinite(logp):
            raise CholeskyError("initial hyperparameters have zero posterior density")

    samples: list[HyperState] = []
    total = cfg.burn_in + cfg.num_samples * cfg.thin
    for sweep in range(total):
        for c in range(layout.size):
            def f(v, c=c):
                old = z[c]
                z[c] = v
                try:
                    return target(z)
                finally:
                    z[c] = old
            try:
                z[c], logp = slice_sample_1d(f, z[c], cfg.initial_width, cfg.max_stepout, rng,
                                             logp0=logp, return_logp=True)
            except SliceCollapseError:
                logp = target(z)
        kept = sweep - cfg.burn_in
        if kept >= 0 and (kept + 1) % cfg.thin == 0:
            samples.append(layout.unpack(z, init.kernel.family, fixed_scales))
    return samples


def default_hyper_state(dim: int, num_tasks: int = 1, family: str = "matern52") -> HyperState:
    """Neutral starting point for a fresh chain."""
    tc = None
    if num_tasks > 1:
        tc = TaskCovariance(num_tasks, np.full(num_tasks * (num_tasks - 1) // 2, 1.0))
    return HyperState(
        KernelParams(1.0, np.full(dim, 0.5), family),
        1e-3,
        0.0,
        tuple(WarpingParams.identity(dim) for _ in range(num_tasks)),
        tc,
    )
