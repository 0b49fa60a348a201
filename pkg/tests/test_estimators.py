import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from warpbo.estimators import BayesianOptimizer, WarpedGPRegressor
from warpbo.warping import BetaCDFWarper
from warpbo.special import betainc


class TestRegressor:
    def test_fit_predict(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(size=(25, 1))
        y = np.sin(6 * X[:, 0] ** 3)
        model = WarpedGPRegressor(n_samples=5, burn_in=20).fit(X, y)
        Xq = np.linspace(0.05, 0.95, 7)[:, None]
        mu, sd = model.predict(Xq, return_std=True)
        assert mu.shape == sd.shape == (7,)
        assert np.all(sd >= 0)
        assert np.max(np.abs(mu - np.sin(6 * Xq[:, 0] ** 3))) < 0.2
        assert model.score(X, y) > 0.95

    def test_params_and_clone(self):
        model = WarpedGPRegressor(kernel="se", warping=False, n_samples=3)
        params = model.get_params()
        assert params["kernel"] == "se" and params["warping"] is False
        assert clone(model).get_params() == params

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        X = rng.uniform(size=(10, 2))
        y = X.sum(axis=1)
        a = WarpedGPRegressor(n_samples=3, burn_in=5, random_state=4).fit(X, y).predict(X)
        b = WarpedGPRegressor(n_samples=3, burn_in=5, random_state=4).fit(X, y).predict(X)
        np.testing.assert_array_equal(a, b)

    def test_validation(self):
        with pytest.raises(NotFittedError):
            WarpedGPRegressor().predict([[0.5]])
        with pytest.raises(ValueError):
            WarpedGPRegressor().fit([[1.5]], [0.0])
        with pytest.raises(ValueError):
            WarpedGPRegressor().fit([[0.5], [0.2]], [0.0])
        model = WarpedGPRegressor(n_samples=2, burn_in=2).fit([[0.1, 0.2], [0.5, 0.9]], [0.0, 1.0])
        with pytest.raises(ValueError):
            model.predict([[0.5]])


class TestWarper:
    def test_transform(self):
        X = np.array([[0.2, 0.7], [0.5, 0.1]])
        out = BetaCDFWarper(alpha=[2.0, 1.0], beta=[1.0, 3.0]).fit(X).transform(X)
        np.testing.assert_array_equal(out[:, 0], betainc(X[:, 0], 2.0, 1.0))
        np.testing.assert_array_equal(out[:, 1], betainc(X[:, 1], 1.0, 3.0))


class TestOptimizer:
    def test_ask_tell(self):
        opt = BayesianOptimizer(bounds=[(-1.0, 1.0)], acq_budget=100, random_state=0)
        for _ in range(6):
            x = opt.ask()
            assert -1 <= x[0] <= 1
            opt.tell(x, float((x[0] - 0.3) ** 2))
        best_x, best_y = opt.best()
        assert best_y == min(opt.trace())
        assert opt.trace() == sorted(opt.trace(), reverse=True)

    def test_minimize(self):
        opt = BayesianOptimizer(bounds=[(0.0, 1.0)], random_state=1).minimize(lambda x: float((x[0] - 0.7) ** 2), 12)
        assert abs(opt.best()[0][0] - 0.7) < 0.05

    def test_best_before_tell(self):
        with pytest.raises(NotFittedError):
            BayesianOptimizer(bounds=[(0.0, 1.0)]).best()
        opt = BayesianOptimizer(bounds=[(0.0, 1.0)])
        opt.ask()
        with pytest.raises(ValueError):
            opt.best()

    def test_multitask(self):
        opt = BayesianOptimizer(bounds=[(0.0, 1.0)], tasks=["a", "b"], acq_budget=50)
        opt.tell([0.2], 1.0, task="a")
        x = opt.ask(task="b")
        assert 0 <= x[0] <= 1
