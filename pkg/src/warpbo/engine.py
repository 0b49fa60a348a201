"""Ask/tell Bayesian optimization loop over a bounded search space.

State transitions are pure: :func:`suggest` and :func:`observe` return a new
:class:`ExperimentState` and never mutate their input. Every random draw is
keyed on ``(seed, number of observations, task)`` so that a suggestion is a
deterministic function of the state.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from . import __version__
from .acquisition import AcquisitionContext, maximize_acquisition
from .gp import CholeskyError, HyperState, ObservationSet, fit
from .kernels import KERNEL_FAMILIES, MATERN52_ARD, KernelParams, TaskCovariance
from .slice import HyperPriors, SamplerConfig, default_hyper_state, sample_hypers
from .special import betainc
from .warping import WarpingParams, WarpingPrior, default_prior

logger = logging.getLogger(__name__)

STATE_VERSION = 1
DUPLICATE_TOL = 1e-9
DUPLICATE_PERTURB = 1e-3

# stream tags for rng keys
_INIT, _SAMPLER, _ACQ, _DEDUP = 0, 1, 2, 3


class StateError(ValueError):
    """A serialized experiment state is malformed."""


class ObservationError(ValueError):
    """An observation is out of bounds or not finite."""


@dataclass(frozen=True)
class Dimension:
    name: str
    lower: float
    upper: float
    log: bool = False

    def __post_init__(self):
        object.__setattr__(self, "lower", float(self.lower))
        object.__setattr__(self, "upper", float(self.upper))
        if not (math.isfinite(self.lower) and math.isfinite(self.upper) and self.lower < self.upper):
            raise ValueError(f"dimension {self.name!r}: need finite lower < upper")
        if self.log and self.lower <= 0:
            raise ValueError(f"dimension {self.name!r}: log-scaled bounds must be positive")


@dataclass(frozen=True)
class SearchSpace:
    dims: tuple[Dimension, ...]
    tasks: tuple[str, ...] = ("main",)

    def __post_init__(self):
        dims = tuple(d if isinstance(d, Dimension) else Dimension(*d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if not dims:
            raise ValueError("search space needs at least one dimension")
        names = [d.name for d in dims]
        if len(set(names)) != len(names):
            raise ValueError("dimension names must be unique")
        if not self.tasks or len(set(self.tasks)) != len(self.tasks):
            raise ValueError("task names must be nonempty and unique")

    @property
    def dim(self) -> int:
        return len(self.dims)

    @property
    def num_tasks(self) -> int:
        return len(self.tasks)

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dims]

    def task_index(self, task: str | int | None) -> int:
        if task is None:
            if self.num_tasks != 1:
                raise ValueError("task must be given in multi-task mode")
            return 0
        if isinstance(task, (int, np.integer)) and not isinstance(task, bool):
            if 0 <= task < self.num_tasks:
                return int(task)
        elif task in self.tasks:
            return self.tasks.index(task)
        raise ValueError(f"unknown task {task!r}")

    @property
    def _lo(self) -> np.ndarray:
        return np.array([math.log(d.lower) if d.log else d.lower for d in self.dims])

    @property
    def _hi(self) -> np.ndarray:
        return np.array([math.log(d.upper) if d.log else d.upper for d in self.dims])

    @property
    def _logmask(self) -> np.ndarray:
        return np.array([d.log for d in self.dims])


def _as_point(space: SearchSpace, raw) -> np.ndarray:
    if isinstance(raw, dict):
        try:
            raw = [raw[n] for n in space.names]
        except KeyError as exc:
            raise ObservationError(f"missing parameter {exc.args[0]!r}") from None
    x = np.asarray(raw, dtype=float).reshape(-1)
    if x.size != space.dim:
        raise ObservationError(f"expected {space.dim} coordinates, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ObservationError("coordinates must be finite")
    return x


def normalize(space: SearchSpace, raw) -> np.ndarray:
    """Map a raw point to ``[0, 1]^D`` (log-scaled dims are mapped in log space)."""
    x = _as_point(space, raw)
    lower = np.array([d.lower for d in space.dims])
    upper = np.array([d.upper for d in space.dims])
    if np.any(x < lower) or np.any(x > upper):
        raise ObservationError("point lies outside the search-space bounds")
    mask = space._logmask
    xt = np.where(mask, np.log(np.where(mask, x, 1.0)), x)
    lo, hi = space._lo, space._hi
    return np.clip((xt - lo) / (hi - lo), 0.0, 1.0)


def denormalize(space: SearchSpace, u) -> np.ndarray:
    u = np.clip(np.asarray(u, dtype=float).reshape(-1), 0.0, 1.0)
    lo, hi = space._lo, space._hi
    xt = lo + u * (hi - lo)
    mask = space._logmask
    x = xt.copy()
    x[mask] = np.exp(xt[mask])
    lower = np.array([d.lower for d in space.dims])
    upper = np.array([d.upper for d in space.dims])
    return np.clip(x, lower, upper)


@dataclass(frozen=True)
class EngineConfig:
    """Model, sampler and acquisition settings for one experiment.

    ``warping_priors`` is ``None`` for the default log-normal prior on every
    dimension, or one :class:`WarpingPrior` per dimension.
    """

    kernel: str = MATERN52_ARD
    warping: bool = True
    warping_priors: tuple[WarpingPrior, ...] | None = None
    init_count: int = 2
    burn_in_initial: int = 50
    burn_in: int = 10
    num_samples: int = 10
    thin: int = 1
    max_stepout: int = 8
    initial_width: float = 1.0
    acq_budget: int | None = None
    length_scale_prior: tuple[float, float] = (0.0, 1.0)
    amplitude_prior: tuple[float, float] = (0.0, 1.0)
    noise_prior: tuple[float, float] = (-6.0, 2.0)
    mean_prior: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.kernel not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.init_count < 1:
            raise ValueError("init_count must be >= 1")
        if self.acq_budget is not None and self.acq_budget < 1:
            raise ValueError("acq_budget must be >= 1")
        if self.warping_priors is not None:
            object.__setattr__(self, "warping_priors", tuple(self.warping_priors))
        for name in ("length_scale_prior", "amplitude_prior", "noise_prior", "mean_prior"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        # validates the counts
        SamplerConfig(self.burn_in, self.num_samples, self.thin, self.max_stepout, self.initial_width)
        SamplerConfig(self.burn_in_initial, 1)

    def hyper_priors(self, space: SearchSpace) -> HyperPriors:
        common = dict(
            length_scale_prior=self.length_scale_prior,
            amplitude_prior=self.amplitude_prior,
            noise_prior=self.noise_prior,
            mean_prior=self.mean_prior,
        )
        if not self.warping:
            return HyperPriors(warping_priors=None, **common)
        wp = default_prior() if self.warping_priors is None else list(self.warping_priors)
        if isinstance(wp, list) and len(wp) != space.dim:
            raise ValueError("need one warping prior per dimension")
        return HyperPriors(warping_priors=(wp,) * space.num_tasks, **common)

    def budget(self, dim: int) -> int:
        return self.acq_budget if self.acq_budget is not None else 1000 * dim


@dataclass(frozen=True)
class Observation:
    task: int
    x: tuple[float, ...]
    y: float


@dataclass(frozen=True)
class ExperimentState:
    space: SearchSpace
    config: EngineConfig = field(default_factory=EngineConfig)
    seed: int = 0
    observations: tuple[Observation, ...] = ()
    samples: tuple[HyperState, ...] | None = None
    samples_n: int = -1
    iteration: int = 0
    failures: tuple[tuple[int, tuple[float, ...]], ...] = ()

    @property
    def n(self) -> int:
        return len(self.observations)

    def task_observations(self, task) -> list[Observation]:
        t = self.space.task_index(task)
        return [o for o in self.observations if o.task == t]

    def incumbent(self, task=None) -> tuple[np.ndarray, float] | None:
        obs = self.task_observations(task)
        if not obs:
            return None
        best = min(obs, key=lambda o: o.y)
        return np.array(best.x), best.y

    def normalized(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Normalized inputs, raw outputs and task labels of every observation."""
        if not self.observations:
            return np.zeros((0, self.space.dim)), np.zeros(0), np.zeros(0, dtype=np.int64)
        X = np.array([normalize(self.space, o.x) for o in self.observations])
        y = np.array([o.y for o in self.observations])
        t = np.array([o.task for o in self.observations], dtype=np.int64)
        return X, y, t

    def failed_points(self, task) -> np.ndarray:
        """Normalized points on ``task`` whose evaluation was abandoned."""
        t = self.space.task_index(task)
        pts = [normalize(self.space, x) for ft, x in self.failures if ft == t]
        return np.array(pts) if pts else np.zeros((0, self.space.dim))


def new_state(space: SearchSpace, config: EngineConfig | None = None, seed: int = 0) -> ExperimentState:
    return ExperimentState(space=space, config=config or EngineConfig(), seed=int(seed))


def _rng(state: ExperimentState, tag: int, task: int = 0) -> np.random.Generator:
    key = [state.seed, tag, state.n, task]
    if state.failures:
        key.append(len(state.failures))
    return np.random.default_rng(key)


def standardize(y: np.ndarray) -> tuple[np.ndarray, float, float]:
    mu = float(np.mean(y))
    sd = float(np.std(y)) if y.size > 1 else 0.0
    if not sd > 0:
        sd = 1.0
    return (y - mu) / sd, mu, sd


def initial_design_point(space: SearchSpace, seed: int, task: int, index: int) -> np.ndarray:
    """Point ``index`` of the seeded scrambled Sobol initialization sequence for ``task``."""
    sobol = qmc.Sobol(space.dim, scramble=True, seed=np.random.default_rng([seed, _INIT, task]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return sobol.random(index + 1)[index]


def observation_set(state: ExperimentState) -> tuple[ObservationSet, float, float]:
    X, y, t = state.normalized()
    ys, mu, sd = standardize(y)
    tasks = t if state.space.num_tasks > 1 else None
    return ObservationSet(X, ys, tasks, state.space.num_tasks), mu, sd


def _initial_hyper(state: ExperimentState) -> HyperState:
    h = default_hyper_state(state.space.dim, state.space.num_tasks, state.config.kernel)
    return h


def posterior_samples(state: ExperimentState) -> tuple[ExperimentState, list[HyperState]]:
    """Hyperparameter samples for the current data, sampling only if stale."""
    if state.samples is not None and state.samples_n == state.n:
        return state, list(state.samples)
    obs, _, _ = observation_set(state)
    cfg = state.config
    if state.samples:
        init, burn = state.samples[-1], cfg.burn_in
    else:
        init, burn = _initial_hyper(state), cfg.burn_in_initial
    scfg = SamplerConfig(burn, cfg.num_samples, cfg.thin, cfg.max_stepout, cfg.initial_width, state.seed)
    samples = sample_hypers(obs, cfg.hyper_priors(state.space), scfg, init, rng=_rng(state, _SAMPLER))
    return dataclasses.replace(state, samples=tuple(samples), samples_n=state.n), samples


def _dedupe(u: np.ndarray, existing: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if existing.size and np.min(np.max(np.abs(existing - u), axis=1)) <= DUPLICATE_TOL:
        u = u + rng.uniform(-0.5 * DUPLICATE_PERTURB, 0.5 * DUPLICATE_PERTURB, size=u.shape)
    return np.clip(u, 0.0, 1.0)


def suggest_normalized(state: ExperimentState, task=None) -> tuple[np.ndarray, ExperimentState]:
    t = state.space.task_index(task)
    X, _, labels = state.normalized()
    own = X[labels == t]
    n_t = own.shape[0]
    failed = state.failed_points(t)
    if n_t < state.config.init_count:
        u = initial_design_point(state.space, state.seed, t, n_t + failed.shape[0])
        return _dedupe(u, own, _rng(state, _DEDUP, t)), state

    state, samples = posterior_samples(state)
    obs, _, _ = observation_set(state)
    posteriors = []
    for h in samples:
        try:
            posteriors.append(fit(obs, h))
        except CholeskyError:
            logger.warning("skipping a hyperparameter sample with an ill-conditioned Gram matrix")
    if not posteriors:
        raise CholeskyError("no hyperparameter sample produced a usable posterior")
    f_best = float(np.min(obs.y[labels == t]))
    ctx = AcquisitionContext(posteriors, f_best, t)
    u = maximize_acquisition(ctx, state.space.dim, state.config.budget(state.space.dim),
                             _rng(state, _ACQ, t), observed=own, exclude=failed)
    return _dedupe(u, own, _rng(state, _DEDUP, t)), state


def suggest(state: ExperimentState, task=None) -> tuple[np.ndarray, ExperimentState]:
    """Next raw point to evaluate on ``task`` and the state with refreshed samples."""
    u, state = suggest_normalized(state, task)
    return denormalize(state.space, u), state


def observe(state: ExperimentState, task, raw, y: float) -> ExperimentState:
    """Return a new state with ``(raw, y)`` appended for ``task``."""
    t = state.space.task_index(task)
    try:
        y = float(y)
    except (TypeError, ValueError):
        raise ObservationError(f"objective value {y!r} is not a number") from None
    if not math.isfinite(y):
        raise ObservationError("objective value must be finite")
    x = _as_point(state.space, raw)
    normalize(state.space, x)
    o = Observation(t, tuple(float(v) for v in x), y)
    return dataclasses.replace(state, observations=state.observations + (o,), iteration=state.iteration + 1)


def record_failure(state: ExperimentState, task, raw) -> ExperimentState:
    """Return a new state that remembers ``raw`` as a point to avoid on ``task``."""
    t = state.space.task_index(task)
    x = _as_point(state.space, raw)
    normalize(state.space, x)
    return dataclasses.replace(state, failures=state.failures + ((t, tuple(float(v) for v in x)),))


def best_so_far(state: ExperimentState, task=None) -> list[float]:
    trace, best = [], math.inf
    for o in state.task_observations(task):
        best = min(best, o.y)
        trace.append(best)
    return trace


def run_loop(
    state: ExperimentState,
    objective: Callable[[np.ndarray], float],
    max_evals: int,
    task=None,
    callback: Callable[[ExperimentState, Observation], None] | None = None,
) -> ExperimentState:
    """Suggest, evaluate, observe until ``task`` has ``max_evals`` evaluations.

    Pre-existing observations and recorded failures on ``task`` count toward
    ``max_evals``. A point
    whose evaluation fails twice is skipped with a warning, still consumes
    one evaluation slot, and is recorded so later suggestions avoid it.
    """
    t = state.space.task_index(task)
    attempts = len(state.task_observations(t)) + sum(1 for ft, _ in state.failures if ft == t)
    while attempts < max_evals:
        x, state = suggest(state, t)
        y = None
        for _ in range(2):
            try:
                y = float(objective(x))
                if math.isfinite(y):
                    break
                y = None
            except Exception as exc:  # noqa: BLE001 - objective is user code
                logger.warning("objective failed at %s: %s", x.tolist(), exc)
        attempts += 1
        if y is None:
            warnings.warn(f"skipping point {x.tolist()} after a failed retry", RuntimeWarning, stacklevel=2)
            state = record_failure(state, t, x)
            continue
        state = observe(state, t, x, y)
        if callback is not None:
            callback(state, state.observations[-1])
    return state


def mean_warping_export(state: ExperimentState, samples: Sequence[HyperState] | None = None,
                        grid: int = 101) -> dict[tuple[int, int], tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Pointwise mean and sd of the warping curves over hyperparameter samples.

    Returns ``{(task, dim): (grid_points, mean, sd)}``.
    """
    if samples is None:
        samples = state.samples
    if not samples:
        raise ValueError("no hyperparameter samples to export")
    if grid < 2:
        raise ValueError("grid must have at least two points")
    u = np.linspace(0.0, 1.0, grid)
    out = {}
    for t in range(samples[0].num_tasks):
        for d in range(samples[0].kernel.dim):
            curves = np.array([betainc(u, h.warpings[t].alpha[d], h.warpings[t].beta[d]) for h in samples])
            out[(t, d)] = (u, curves.mean(axis=0), curves.std(axis=0))
    return out


# --- serialization -------------------------------------------------------

def _prior_to_dict(p: WarpingPrior) -> dict:
    return dataclasses.asdict(p)


def config_to_dict(cfg: EngineConfig) -> dict:
    d = dataclasses.asdict(cfg)
    if cfg.warping_priors is not None:
        d["warping_priors"] = [_prior_to_dict(p) for p in cfg.warping_priors]
    for k in ("length_scale_prior", "amplitude_prior", "noise_prior", "mean_prior"):
        d[k] = list(d[k])
    return d


def config_from_dict(d: dict) -> EngineConfig:
    d = dict(d)
    if d.get("warping_priors") is not None:
        d["warping_priors"] = tuple(WarpingPrior(**p) for p in d["warping_priors"])
    return EngineConfig(**d)


def space_to_dict(space: SearchSpace) -> dict:
    return {
        "dims": [{"name": d.name, "lower": d.lower, "upper": d.upper, "log": d.log} for d in space.dims],
        "tasks": list(space.tasks),
    }


def space_from_dict(d: dict) -> SearchSpace:
    return SearchSpace(tuple(Dimension(**x) for x in d["dims"]), tuple(d["tasks"]))


def hyper_to_dict(h: HyperState) -> dict:
    return {
        "family": h.kernel.family,
        "amplitude": h.kernel.amplitude,
        "length_scales": h.kernel.length_scales.tolist(),
        "noise": h.noise,
        "mean": h.mean,
        "warpings": [{"alpha": w.alpha.tolist(), "beta": w.beta.tolist()} for w in h.warpings],
        "task_cov": None if h.task_cov is None else {
            "num_tasks": h.task_cov.num_tasks,
            "angles": h.task_cov.angles.tolist(),
            "scales": h.task_cov.scales.tolist(),
        },
    }


def hyper_from_dict(d: dict) -> HyperState:
    tc = d.get("task_cov")
    return HyperState(
        KernelParams(d["amplitude"], d["length_scales"], d["family"]),
        d["noise"],
        d["mean"],
        tuple(WarpingParams(w["alpha"], w["beta"]) for w in d["warpings"]),
        None if tc is None else TaskCovariance(tc["num_tasks"], tc["angles"], tc["scales"]),
    )


def state_to_dict(state: ExperimentState) -> dict:
    return {
        "version": STATE_VERSION,
        "warpbo": __version__,
        "space": space_to_dict(state.space),
        "config": config_to_dict(state.config),
        "seed": state.seed,
        "iteration": state.iteration,
        "observations": [{"task": o.task, "x": list(o.x), "y": o.y} for o in state.observations],
        "samples": None if state.samples is None else [hyper_to_dict(h) for h in state.samples],
        "samples_n": state.samples_n,
        "failures": [{"task": ft, "x": list(x)} for ft, x in state.failures],
    }


def state_from_dict(d: dict) -> ExperimentState:
    try:
        if d.get("version") != STATE_VERSION:
            raise StateError(f"unsupported state version {d.get('version')!r}")
        space = space_from_dict(d["space"])
        obs = tuple(Observation(int(o["task"]), tuple(float(v) for v in o["x"]), float(o["y"]))
                    for o in d["observations"])
        for o in obs:
            space.task_index(o.task)
            normalize(space, o.x)
        failures = tuple((int(f["task"]), tuple(float(v) for v in f["x"])) for f in d.get("failures", []))
        for ft, x in failures:
            space.task_index(ft)
            normalize(space, x)
        samples = d.get("samples")
        return ExperimentState(
            space=space,
            config=config_from_dict(d["config"]),
            seed=int(d["seed"]),
            observations=obs,
            samples=None if samples is None else tuple(hyper_from_dict(h) for h in samples),
            samples_n=int(d["samples_n"]),
            iteration=int(d["iteration"]),
            failures=failures,
        )
    except StateError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise StateError(f"corrupt experiment state: {exc}") from exc


def dumps_state(state: ExperimentState) -> str:
    """Canonical JSON text; floats use shortest round-trip repr, so reloading is exact."""
    return json.dumps(state_to_dict(state), sort_keys=True, indent=1, allow_nan=False) + "\n"


def loads_state(text: str) -> ExperimentState:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise StateError(f"state file is not valid JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise StateError("state file must hold a JSON object")
    return state_from_dict(d)
