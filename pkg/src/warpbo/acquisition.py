"""Expected improvement averaged over hyperparameter samples, and its maximization."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr
from scipy.stats import qmc

from .gp import PosteriorSample

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

N_REFINE = 5
EXCLUDE_RADIUS = 0.01
PERTURB_SD = 0.02
_CHUNK = 2048


@dataclass(frozen=True)
class AcquisitionContext:
    posteriors: Sequence[PosteriorSample]
    f_best: float
    task: int = 0

    def __post_init__(self):
        if len(self.posteriors) == 0:
            raise ValueError("at least one posterior sample is required")
        object.__setattr__(self, "posteriors", tuple(self.posteriors))


def gamma(mean: float, sd: float, f_best: float) -> float:
    """Standardized improvement ``(f_best - mean) / sd``."""
    if not sd > 0:
        raise ValueError("sd must be positive")
    return (f_best - mean) / sd


def _ei(mean, sd, f_best):
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    imp = f_best - mean
    pos = sd > 0
    safe = np.where(pos, sd, 1.0)
    with np.errstate(over="ignore"):
        g = imp / safe
        ei = imp * ndtr(g) + safe * _INV_SQRT_2PI * np.exp(-0.5 * g * g)
    return np.where(pos, np.maximum(ei, 0.0), np.maximum(imp, 0.0))


def expected_improvement(mean: float, sd: float, f_best: float) -> float:
    """Closed-form EI for minimization; ``sd == 0`` gives ``max(f_best - mean, 0)``."""
    if sd < 0:
        raise ValueError("sd must be nonnegative")
    return float(_ei(mean, sd, f_best))


def marginal_ei_many(ctx: AcquisitionContext, X: np.ndarray) -> np.ndarray:
    """Sample-averaged EI at every row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    total = np.zeros(X.shape[0])
    for start in range(0, X.shape[0], _CHUNK):
        block = X[start:start + _CHUNK]
        acc = np.zeros(block.shape[0])
        for ps in ctx.posteriors:
            m, v = ps.predict_many(block, ctx.task)
            acc += _ei(m, np.sqrt(v), ctx.f_best)
        total[start:start + _CHUNK] = acc / len(ctx.posteriors)
    return total


def marginal_ei(ctx: AcquisitionContext, x) -> float:
    return float(marginal_ei_many(ctx, np.asarray(x, dtype=float).reshape(1, -1))[0])


def marginal_ei_and_grad(ctx: AcquisitionContext, x: np.ndarray) -> tuple[float, np.ndarray]:
    """Averaged EI at one point and its gradient with respect to ``x``."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    val = 0.0
    grad = np.zeros(x.shape[1])
    for ps in ctx.posteriors:
        m, v, dm, dv = ps.predict_with_grad(x, ctx.task)
        m, v, dm, dv = m[0], v[0], dm[0], dv[0]
        sd = math.sqrt(v)
        if sd > 0:
            g = (ctx.f_best - m) / sd
            cdf = float(ndtr(g))
            pdf = _INV_SQRT_2PI * math.exp(-0.5 * g * g)
            val += (ctx.f_best - m) * cdf + sd * pdf
            grad += -cdf * dm + pdf * dv / (2.0 * sd)
        elif m < ctx.f_best:
            val += ctx.f_best - m
            grad -= dm
    n = len(ctx.posteriors)
    return val / n, grad / n


def _candidates(dim: int, n: int, rng: np.random.Generator) -> np.ndarray:
    sobol = qmc.Sobol(dim, scramble=True, seed=rng)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return sobol.random(n)


def _near(X: np.ndarray, exclude: np.ndarray | None) -> np.ndarray:
    if exclude is None or len(exclude) == 0:
        return np.zeros(X.shape[0], dtype=bool)
    E = np.asarray(exclude, dtype=float)
    return np.any(np.max(np.abs(X[:, None, :] - E[None]), axis=2) <= EXCLUDE_RADIUS, axis=1)


def maximize_acquisition(
    ctx: AcquisitionContext,
    dim: int,
    budget: int,
    rng: np.random.Generator,
    observed: np.ndarray | None = None,
    exclude: np.ndarray | None = None,
) -> np.ndarray:
    """Multi-start maximization of the averaged EI over ``[0, 1]^dim``.

    Half the evaluation budget goes to a scrambled Sobol candidate set (plus
    jittered copies of ``observed``); the rest is shared between bounded
    L-BFGS-B refinements of the best few candidates. Points within
    ``EXCLUDE_RADIUS`` (max-norm) of a row of ``exclude`` are never returned
    unless nothing else is available.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    n_cand = max(1, math.ceil(budget / 2))
    cands = _candidates(dim, n_cand, rng)
    if observed is not None and len(observed):
        jittered = np.asarray(observed, dtype=float) + rng.normal(0.0, PERTURB_SD, size=np.shape(observed))
        cands = np.vstack([cands, np.clip(jittered, 0.0, 1.0)])
    values = marginal_ei_many(ctx, cands)
    banned = _near(cands, exclude)
    if banned.all():
        banned[:] = False
    values = np.where(banned, -np.inf, values)

    best_i = int(np.argmax(values))
    best_x, best_v = cands[best_i].copy(), float(values[best_i])

    remaining = budget - n_cand
    if remaining <= 0 or not np.isfinite(best_v) or best_v <= 0.0:
        return np.clip(best_x, 0.0, 1.0)

    # stable sort keeps the lowest index first among ties
    order = np.argsort(-values, kind="stable")
    starts = []
    for i in order:
        if len(starts) == N_REFINE:
            break
        if all(np.max(np.abs(cands[i] - s)) > 1e-6 for s in starts):
            starts.append(cands[i])
    scale = 1.0 / best_v
    maxfun = max(5, remaining // len(starts))

    def neg(x):
        v, g = marginal_ei_and_grad(ctx, np.clip(x, 0.0, 1.0))
        return -v * scale, -g * scale

    for s in starts:
        res = minimize(neg, s, jac=True, method="L-BFGS-B", bounds=[(0.0, 1.0)] * dim,
                       options={"maxfun": maxfun, "maxiter": maxfun})
        x = np.clip(res.x, 0.0, 1.0)
        if _near(x[None], exclude)[0]:
            continue
        v = marginal_ei(ctx, x)
        if v > best_v:
            best_x, best_v = x, v
    return best_x
