"""Analytic test objectives and synthetic non-stationary constructions.

Branin and Hartmann-6 constants live in ``data/benchmark_constants.json``;
the file is checked against a pinned SHA-256 digest on load.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Callable, Sequence

import numpy as np

from .special import BetaShape, betainc

CONSTANTS_SHA256 = "a31c03a01e6ea31057c86e1f57a5153dea6476a43aed2f578c097f77b8189f87"


@lru_cache(maxsize=1)
def constants() -> dict:
    raw = resources.files("warpbo").joinpath("data/benchmark_constants.json").read_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    if digest != CONSTANTS_SHA256:
        raise RuntimeError(f"benchmark constants checksum mismatch: {digest}")
    return json.loads(raw)


@lru_cache(maxsize=1)
def _hartmann_arrays():
    c = constants()["hartmann6"]
    return np.array(c["alpha"]), np.array(c["A"]), np.array(c["P"]) * c["P_scale"]


def branin(x1: float, x2: float) -> float:
    c = constants()["branin"]
    b = c["b_numerator"] / (4.0 * math.pi**2)
    cc = c["c_numerator"] / math.pi
    t = 1.0 / (c["t_denominator"] * math.pi)
    return c["a"] * (x2 - b * x1**2 + cc * x1 - c["r"]) ** 2 + c["s"] * (1.0 - t) * math.cos(x1) + c["s"]


def hartmann6(x) -> float:
    x = np.asarray(x, dtype=float).reshape(6)
    alpha, A, P = _hartmann_arrays()
    inner = np.sum(A * (x[None, :] - P) ** 2, axis=1)
    return float(-np.sum(alpha * np.exp(-inner)))


@dataclass(frozen=True)
class BenchmarkSpec:
    name: str
    bounds: tuple[tuple[float, float], ...]
    function: Callable[[np.ndarray], float]
    optimum: float
    minimizers: tuple[tuple[float, ...], ...] = ()
    noise: float = 0.0

    @property
    def dim(self) -> int:
        return len(self.bounds)

    def __call__(self, x) -> float:
        return self.function(np.asarray(x, dtype=float))


def synthetic_warped(base: Callable[[float], float], shapes: BetaShape | Sequence[BetaShape]) -> Callable:
    """Objective ``x -> sum_d base(BetaCDF(x_d; shape_d))`` on ``[0, 1]^D``.

    Warping the inputs with the same shapes makes it stationary again.
    With a single shape the result is the 1-D composition ``base(w(x))``.
    """
    if isinstance(shapes, BetaShape):
        shapes = [shapes]
    a = np.array([s.alpha for s in shapes])
    b = np.array([s.beta for s in shapes])

    def f(x):
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != a.size:
            raise ValueError(f"expected {a.size} coordinates")
        u = betainc(np.clip(x, 0.0, 1.0), a, b)
        return float(sum(base(float(v)) for v in u))

    return f


def multi_task_pair(base: Callable[[float], float], shapes_per_task: Sequence) -> list[Callable]:
    """One objective per task, each ``synthetic_warped(base, shapes_t)``."""
    return [synthetic_warped(base, s) for s in shapes_per_task]


def shifted_quadratic(u: float, center: float = 0.9) -> float:
    return (u - center) ** 2


def _registry() -> dict[str, BenchmarkSpec]:
    c = constants()
    quad_shape = BetaShape(5.0, 1.0)
    u_star = 0.9 ** (1.0 / 5.0)
    specs = [
        BenchmarkSpec("branin", tuple(map(tuple, c["branin"]["bounds"])), lambda x: branin(x[0], x[1]),
                      c["branin"]["minimum"], tuple(map(tuple, c["branin"]["minimizers"]))),
        BenchmarkSpec("hartmann6", tuple(map(tuple, c["hartmann6"]["bounds"])), hartmann6,
                      c["hartmann6"]["minimum"], tuple(map(tuple, c["hartmann6"]["minimizers"]))),
        BenchmarkSpec("warped-quadratic-1d", ((0.0, 1.0),), synthetic_warped(shifted_quadratic, quad_shape),
                      0.0, ((u_star,),)),
        BenchmarkSpec("warped-quadratic-3d", ((0.0, 1.0),) * 3,
                      synthetic_warped(shifted_quadratic, [quad_shape] * 3), 0.0, ((u_star,) * 3,)),
    ]
    return {s.name: s for s in specs}


BENCHMARKS = _registry()


def get_benchmark(name: str) -> BenchmarkSpec:
    try:
        return BENCHMARKS[name]
    except KeyError:
        raise ValueError(f"unknown benchmark {name!r}; choose from {sorted(BENCHMARKS)}") from None
