"""Input validation helpers shared by the estimators and the engine."""

from __future__ import annotations

import numpy as np
from sklearn.utils import check_array


def check_unit_points(X, dim: int | None = None, allow_empty: bool = False) -> np.ndarray:
    """Validate a 2-D array of points lying in the closed unit hypercube."""
    X = check_array(X, dtype=np.float64, ensure_all_finite=True,
                    ensure_min_samples=0 if allow_empty else 1)
    if dim is not None and X.shape[1] != dim:
        raise ValueError(f"X has {X.shape[1]} features, expected {dim}")
    if np.any(X < 0.0) or np.any(X > 1.0):
        raise ValueError("inputs must be normalized to [0, 1]")
    return X


def check_targets(y, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape[0] != n:
        raise ValueError(f"y has {y.shape[0]} entries, expected {n}")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")
    return y


def check_tasks(tasks, n: int, num_tasks: int) -> np.ndarray:
    if tasks is None:
        if num_tasks != 1:
            raise ValueError("task labels are required in multi-task mode")
        return np.zeros(n, dtype=np.int64)
    tasks = np.asarray(tasks).reshape(-1)
    if tasks.shape[0] != n:
        raise ValueError(f"tasks has {tasks.shape[0]} entries, expected {n}")
    if not np.issubdtype(tasks.dtype, np.integer):
        if not np.all(np.equal(np.mod(tasks, 1), 0)):
            raise ValueError("task labels must be integers")
    tasks = tasks.astype(np.int64)
    if np.any(tasks < 0) or np.any(tasks >= num_tasks):
        raise ValueError(f"task labels must lie in [0, {num_tasks})")
    return tasks
