"""Per-dimension Beta-CDF warping of the unit hypercube and its log-normal prior."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_unit_points
from .special import SHAPE_MAX, SHAPE_MIN, BetaShape, betainc, betapdf

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

DEFAULT_PRIOR_VARIANCE = 0.75


class WarpingParams:
    """Shape parameters ``(alpha_d, beta_d)`` for each of ``D`` input dimensions."""

    __slots__ = ("alpha", "beta")

    def __init__(self, alpha, beta):
        alpha = np.array(alpha, dtype=float).reshape(-1)
        beta = np.array(beta, dtype=float).reshape(-1)
        if alpha.shape != beta.shape:
            raise ValueError("alpha and beta must have the same length")
        for name, v in (("alpha", alpha), ("beta", beta)):
            if not np.all(np.isfinite(v)) or np.any(v < SHAPE_MIN) or np.any(v > SHAPE_MAX):
                raise ValueError(f"{name} values must lie in [{SHAPE_MIN}, {SHAPE_MAX}]")
        alpha.flags.writeable = False
        beta.flags.writeable = False
        self.alpha = alpha
        self.beta = beta

    @classmethod
    def identity(cls, dim: int) -> "WarpingParams":
        return cls(np.ones(dim), np.ones(dim))

    @classmethod
    def from_shapes(cls, shapes: Sequence[BetaShape]) -> "WarpingParams":
        return cls([s.alpha for s in shapes], [s.beta for s in shapes])

    @property
    def dim(self) -> int:
        return self.alpha.size

    @property
    def shapes(self) -> list[BetaShape]:
        return [BetaShape(a, b) for a, b in zip(self.alpha, self.beta)]

    @property
    def is_identity(self) -> bool:
        return bool(np.all(self.alpha == 1.0) and np.all(self.beta == 1.0))

    def __eq__(self, other):
        if not isinstance(other, WarpingParams):
            return NotImplemented
        return np.array_equal(self.alpha, other.alpha) and np.array_equal(self.beta, other.beta)

    def __repr__(self):
        pairs = ", ".join(f"({a:.4g}, {b:.4g})" for a, b in zip(self.alpha, self.beta))
        return f"WarpingParams([{pairs}])"


@dataclass(frozen=True)
class WarpingPrior:
    """Independent log-normal laws: ``log alpha ~ N(mu_alpha, sigma_alpha^2)``, same for beta."""

    mu_alpha: float
    sigma_alpha: float
    mu_beta: float
    sigma_beta: float

    def __post_init__(self):
        if not (self.sigma_alpha > 0 and self.sigma_beta > 0):
            raise ValueError("sigma_alpha and sigma_beta must be positive")


def default_prior(value: float = DEFAULT_PRIOR_VARIANCE, as_variance: bool = True) -> WarpingPrior:
    """Zero-mean log-normal prior centred on the identity warping.

    ``value`` is read as the variance of ``log alpha`` unless
    ``as_variance=False``, in which case it is the standard deviation.
    """
    sigma = math.sqrt(value) if as_variance else float(value)
    return WarpingPrior(0.0, sigma, 0.0, sigma)


_PRESETS = {
    "identity-ish": WarpingPrior(0.0, 0.5, 0.0, 0.5),
    "exponential": WarpingPrior(0.0, 0.25, 1.0, 1.0),
    "logarithmic": WarpingPrior(1.0, 1.0, 0.0, 0.25),
    "sigmoidal": WarpingPrior(2.0, 0.5, 2.0, 0.5),
}

PRESET_NAMES = tuple(_PRESETS) + ("default",)


def prior_preset(name: str) -> WarpingPrior:
    if name == "default":
        return default_prior()
    try:
        return _PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown warping prior preset {name!r}; choose from {PRESET_NAMES}") from None


def _per_dim(prior, dim: int) -> list[WarpingPrior]:
    if isinstance(prior, WarpingPrior):
        return [prior] * dim
    prior = list(prior)
    if len(prior) != dim:
        raise ValueError(f"expected {dim} per-dimension priors, got {len(prior)}")
    return prior


def prior_arrays(prior, dim: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Broadcast a prior (single or per-dimension) to ``(mu_a, sd_a, mu_b, sd_b)`` arrays."""
    ps = _per_dim(prior, dim)
    return (
        np.array([p.mu_alpha for p in ps]),
        np.array([p.sigma_alpha for p in ps]),
        np.array([p.mu_beta for p in ps]),
        np.array([p.sigma_beta for p in ps]),
    )


def warp_point(x, w: WarpingParams) -> np.ndarray:
    """Apply the warping coordinate-wise to one point in ``[0, 1]^D``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (w.dim,):
        raise ValueError(f"point has shape {x.shape}, expected ({w.dim},)")
    if np.any(x < 0.0) or np.any(x > 1.0) or not np.all(np.isfinite(x)):
        raise ValueError("point coordinates must lie in [0, 1]")
    return warp_points(x[None, :], w)[0]


def warp_points(X: np.ndarray, w: WarpingParams) -> np.ndarray:
    """Warp an ``(n, D)`` array. Inputs are assumed validated."""
    if w.is_identity:
        return np.array(X, dtype=float, copy=True)
    return betainc(X, w.alpha, w.beta)


def warp_jacobian_diag(X: np.ndarray, w: WarpingParams, eps: float = 1e-9) -> np.ndarray:
    """Derivative of each warped coordinate w.r.t. its input.

    Endpoints are nudged inward and the result capped, since the density is
    unbounded at 0 or 1 for shapes below one.
    """
    if w.is_identity:
        return np.ones_like(X, dtype=float)
    return np.minimum(betapdf(np.clip(X, eps, 1.0 - eps), w.alpha, w.beta), 1e12)


def _lognormal_logpdf(v: np.ndarray, mu, sigma) -> np.ndarray:
    lv = np.log(v)
    return -lv - np.log(sigma) - _LOG_SQRT_2PI - 0.5 * ((lv - mu) / sigma) ** 2


def log_prior(w: WarpingParams, p) -> float:
    """Log density of the shape parameters (on their natural scale).

    ``p`` is a single :class:`WarpingPrior` or one per dimension.
    """
    mu_a, sd_a, mu_b, sd_b = prior_arrays(p, w.dim)
    return float(
        np.sum(_lognormal_logpdf(w.alpha, mu_a, sd_a)) + np.sum(_lognormal_logpdf(w.beta, mu_b, sd_b))
    )


def sample_prior(p, rng: np.random.Generator, dim: int) -> WarpingParams:
    """Draw one :class:`WarpingParams` from the prior."""
    mu_a, sd_a, mu_b, sd_b = prior_arrays(p, dim)
    a = np.exp(rng.normal(mu_a, sd_a))
    b = np.exp(rng.normal(mu_b, sd_b))
    return WarpingParams(np.clip(a, SHAPE_MIN, SHAPE_MAX), np.clip(b, SHAPE_MIN, SHAPE_MAX))


class BetaCDFWarper(TransformerMixin, BaseEstimator):
    """Transformer applying a fixed Beta-CDF warping to unit-hypercube features.

    Parameters
    ----------
    alpha, beta : float or array-like of shape (n_features,)
        Shape parameters; scalars are broadcast to every feature.
    """

    def __init__(self, alpha=1.0, beta=1.0):
        self.alpha = alpha
        self.beta = beta

    def fit(self, X, y=None):
        X = check_unit_points(X)
        d = X.shape[1]
        self.warping_ = WarpingParams(
            np.broadcast_to(np.asarray(self.alpha, dtype=float), (d,)),
            np.broadcast_to(np.asarray(self.beta, dtype=float), (d,)),
        )
        self.n_features_in_ = d
        return self

    def transform(self, X):
        check_is_fitted(self, "warping_")
        X = check_unit_points(X, dim=self.n_features_in_)
        return warp_points(X, self.warping_)
