"""scikit-learn style front ends.

:class:`WarpedGPRegressor` is a regressor whose hyperparameters (including
the input warping) are integrated out by slice sampling; :class:`BayesianOptimizer`
wraps the ask/tell engine so it can be configured through ``get_params``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from ._validation import check_targets, check_unit_points
from .engine import (
    Dimension,
    EngineConfig,
    SearchSpace,
    best_so_far,
    new_state,
    observe,
    run_loop,
    standardize,
    suggest,
)
from .gp import ObservationSet, fit
from .slice import HyperPriors, SamplerConfig, default_hyper_state, sample_hypers
from .warping import default_prior


class WarpedGPRegressor(RegressorMixin, BaseEstimator):
    """GP regressor on ``[0, 1]^D`` inputs with Beta-CDF warping marginalized by MCMC.

    Predictions average the per-sample Gaussian predictives: the returned
    mean is the mixture mean and the standard deviation is the mixture's.
    Targets are standardized internally.

    Parameters
    ----------
    kernel : {"matern52", "se"}
    warping : bool
        If False the warpings are pinned to the identity.
    warping_prior : WarpingPrior or list of WarpingPrior, optional
        Defaults to the zero-mean log-normal prior with variance 0.75.
    n_samples, burn_in, thin : int
        Slice-sampler schedule.
    random_state : int
    """

    def __init__(self, kernel="matern52", warping=True, warping_prior=None,
                 n_samples=10, burn_in=50, thin=1, random_state=0):
        self.kernel = kernel
        self.warping = warping
        self.warping_prior = warping_prior
        self.n_samples = n_samples
        self.burn_in = burn_in
        self.thin = thin
        self.random_state = random_state

    def fit(self, X, y):
        X = check_unit_points(X)
        y = check_targets(y, X.shape[0])
        ys, self.y_mean_, self.y_scale_ = standardize(y)
        obs = ObservationSet(X, ys)
        priors = HyperPriors.for_tasks(
            1, warping_prior=self.warping_prior or default_prior(), warping=self.warping)
        cfg = SamplerConfig(self.burn_in, self.n_samples, self.thin, seed=int(self.random_state or 0))
        self.samples_ = sample_hypers(obs, priors, cfg, default_hyper_state(X.shape[1], 1, self.kernel))
        self.posteriors_ = [fit(obs, h) for h in self.samples_]
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X, return_std=False):
        check_is_fitted(self, "posteriors_")
        X = check_unit_points(X, dim=self.n_features_in_)
        means, variances = zip(*(ps.predict_many(X) for ps in self.posteriors_))
        means, variances = np.array(means), np.array(variances)
        mu = means.mean(axis=0)
        var = (variances + means**2).mean(axis=0) - mu**2
        mu = self.y_mean_ + self.y_scale_ * mu
        if return_std:
            return mu, self.y_scale_ * np.sqrt(np.maximum(var, 0.0))
        return mu


class BayesianOptimizer(BaseEstimator):
    """Ask/tell optimizer over a box, minimizing a black-box objective.

    Parameters
    ----------
    bounds : sequence of (lower, upper)
    tasks : sequence of str, optional
        Task names for multi-task optimization.
    warping : bool
    kernel : {"matern52", "se"}
    init_count : int
        Quasi-random points per task before the model is used.
    acq_budget : int, optional
        Acquisition evaluations per suggestion (default ``1000 * D``).
    random_state : int
    """

    def __init__(self, bounds, tasks=None, warping=True, kernel="matern52", init_count=2,
                 acq_budget=None, random_state=0):
        self.bounds = bounds
        self.tasks = tasks
        self.warping = warping
        self.kernel = kernel
        self.init_count = init_count
        self.acq_budget = acq_budget
        self.random_state = random_state

    def _ensure_state(self):
        if not hasattr(self, "state_"):
            space = SearchSpace(tuple(Dimension(f"x{i + 1}", lo, hi) for i, (lo, hi) in enumerate(self.bounds)),
                                tuple(self.tasks or ("main",)))
            cfg = EngineConfig(kernel=self.kernel, warping=self.warping, init_count=self.init_count,
                               acq_budget=self.acq_budget)
            self.state_ = new_state(space, cfg, int(self.random_state or 0))
        return self.state_

    def ask(self, task=None) -> np.ndarray:
        x, self.state_ = suggest(self._ensure_state(), task)
        return x

    def tell(self, x, y, task=None) -> "BayesianOptimizer":
        self.state_ = observe(self._ensure_state(), task, x, y)
        return self

    def minimize(self, func, n_evals: int, task=None) -> "BayesianOptimizer":
        self.state_ = run_loop(self._ensure_state(), func, n_evals, task)
        return self

    def _require_state(self):
        if not hasattr(self, "state_"):
            raise NotFittedError("call ask, tell or minimize first")

    def best(self, task=None) -> tuple[np.ndarray, float]:
        self._require_state()
        inc = self.state_.incumbent(task)
        if inc is None:
            raise ValueError("no observations yet")
        return inc

    def trace(self, task=None) -> list[float]:
        self._require_state()
        return best_so_far(self.state_, task)
