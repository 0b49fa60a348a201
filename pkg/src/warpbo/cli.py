"""Command-line front end: ask/tell, external-objective driver, benchmarks, warping export.

Exit codes: 0 ok, 2 config error, 3 state error, 4 bad observation,
5 nothing to export.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import shlex
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from .benchmarks import get_benchmark
from .config import ConfigError, load_config, resolve_seed
from .engine import (
    Dimension,
    EngineConfig,
    ExperimentState,
    ObservationError,
    SearchSpace,
    StateError,
    best_so_far,
    dumps_state,
    loads_state,
    mean_warping_export,
    new_state,
    observe,
    run_loop,
    suggest,
    observation_set,
)
from .slice import SamplerConfig, sample_hypers

logger = logging.getLogger("warpbo")

EXIT_OK, EXIT_CONFIG, EXIT_STATE, EXIT_OBSERVATION, EXIT_EMPTY = 0, 2, 3, 4, 5


class CLIError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def atomic_write(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_state(path) -> ExperimentState:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CLIError(EXIT_STATE, f"cannot read state {path}: {exc}") from None
    try:
        return loads_state(text)
    except StateError as exc:
        raise CLIError(EXIT_STATE, str(exc)) from None


def _config(path):
    try:
        return load_config(path)
    except ConfigError as exc:
        raise CLIError(EXIT_CONFIG, str(exc)) from None


def _state_for(config_path, state_path, cli_seed) -> ExperimentState:
    cfg = _config(config_path)
    try:
        seed = resolve_seed(cfg.seed, cli_seed)
    except ConfigError as exc:
        raise CLIError(EXIT_CONFIG, str(exc)) from None
    if state_path is not None and Path(state_path).exists():
        return read_state(state_path)
    return new_state(cfg.space, cfg.engine, seed)


def _point_record(space: SearchSpace, x) -> dict:
    return {d.name: float(v) for d, v in zip(space.dims, x)}


def _fmt(v: float) -> str:
    return repr(float(v))


def trace_csv(state: ExperimentState, task=None) -> str:
    t = state.space.task_index(task)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "task", *state.space.names, "y", "best_so_far"])
    best = math.inf
    for i, o in enumerate(state.task_observations(t), start=1):
        best = min(best, o.y)
        w.writerow([i, state.space.tasks[t], *(_fmt(v) for v in o.x), _fmt(o.y), _fmt(best)])
    return buf.getvalue()


def export_csv(table: dict, state: ExperimentState) -> str:
    keys = sorted(table)
    grid = table[keys[0]][0]
    header = ["x"]
    for t, d in keys:
        tag = f"{state.space.tasks[t]}:{state.space.dims[d].name}"
        header += [f"{tag}:mean", f"{tag}:sd"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for i, u in enumerate(grid):
        row = [_fmt(u)]
        for k in keys:
            row += [_fmt(table[k][1][i]), _fmt(table[k][2][i])]
        w.writerow(row)
    return buf.getvalue()


# --- subcommands -----------------------------------------------------------

def cmd_suggest(args) -> int:
    state = _state_for(args.config, args.state, args.seed)
    try:
        task = state.space.task_index(args.task)
    except ValueError as exc:
        raise CLIError(EXIT_CONFIG, str(exc)) from None
    x, state = suggest(state, task)
    atomic_write(args.state, dumps_state(state))
    print(json.dumps({"task": state.space.tasks[task], "point": _point_record(state.space, x)}, sort_keys=True))
    return EXIT_OK


def cmd_observe(args) -> int:
    state = read_state(args.state)
    try:
        point = json.loads(args.point)
        value = float(args.value)
        state = observe(state, args.task, point, value)
    except (json.JSONDecodeError, ObservationError, ValueError, TypeError) as exc:
        raise CLIError(EXIT_OBSERVATION, f"bad observation: {exc}") from None
    atomic_write(args.state, dumps_state(state))
    return EXIT_OK


class SubprocessObjective:
    """Runs an external command per evaluation: JSON record on stdin, one float on stdout."""

    def __init__(self, command, space: SearchSpace, task: str, timeout: float | None = None):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.space = space
        self.task = task
        self.timeout = timeout

    def __call__(self, x) -> float:
        record = json.dumps({"task": self.task, "params": _point_record(self.space, x)}, sort_keys=True)
        proc = subprocess.run(self.command, input=record + "\n", capture_output=True, text=True,
                              timeout=self.timeout)
        if proc.returncode != 0:
            raise RuntimeError(f"objective exited with status {proc.returncode}: {proc.stderr.strip()}")
        out = proc.stdout.strip().splitlines()
        if len(out) != 1:
            raise ValueError(f"objective must print exactly one value, got {proc.stdout!r}")
        return float(out[0])


def cmd_run(args) -> int:
    cfg = _config(args.config)
    if cfg.objective_command is None:
        raise CLIError(EXIT_CONFIG, "config has no objective.command")
    state = _state_for(args.config, args.state, args.seed)
    try:
        task = state.space.task_index(args.task)
    except ValueError as exc:
        raise CLIError(EXIT_CONFIG, str(exc)) from None
    objective = SubprocessObjective(cfg.objective_command, state.space, state.space.tasks[task], cfg.objective_timeout)

    def checkpoint(st, _obs):
        if args.state:
            atomic_write(args.state, dumps_state(st))

    state = run_loop(state, objective, args.max_evals, task, callback=checkpoint)
    if args.state:
        atomic_write(args.state, dumps_state(state))
    atomic_write(args.trace, trace_csv(state, task))
    trace = best_so_far(state, task)
    print(json.dumps({"evaluations": len(trace), "best": trace[-1] if trace else None}))
    return EXIT_OK


def run_benchmark(name: str, evals: int, repeats: int, warping: bool, seed: int,
                  config: EngineConfig | None = None) -> tuple[dict, list[ExperimentState]]:
    bench = get_benchmark(name)
    space = SearchSpace(tuple(Dimension(f"x{i + 1}", lo, hi) for i, (lo, hi) in enumerate(bench.bounds)))
    base = config or EngineConfig()
    cfg = EngineConfig(**{**base.__dict__, "warping": warping})
    states, bests = [], []
    for r in range(repeats):
        st = run_loop(new_state(space, cfg, seed + r), bench, evals)
        states.append(st)
        trace = best_so_far(st)
        bests.append(trace[-1] if trace else math.nan)
    arr = np.array(bests)
    summary = {
        "benchmark": name,
        "evals": evals,
        "repeats": repeats,
        "warping": warping,
        "seed": seed,
        "optimum": bench.optimum,
        "best": bests,
        "mean": float(arr.mean()) if repeats else math.nan,
        "sd": float(arr.std()) if repeats else math.nan,
    }
    return summary, states


def cmd_bench(args) -> int:
    try:
        get_benchmark(args.name)
    except ValueError as exc:
        raise CLIError(EXIT_CONFIG, str(exc)) from None
    seed = resolve_seed(0, args.seed)
    summary, states = run_benchmark(args.name, args.evals, args.repeats, not args.no_warping, seed)
    out = Path(args.out)
    for r, st in enumerate(states):
        atomic_write(out / f"trace_{args.name}_run{r}.csv", trace_csv(st))
    text = json.dumps(summary, sort_keys=True)
    atomic_write(out / "summary.json", text + "\n")
    print(text)
    print(f"{args.name}: best {summary['mean']:.6g} +/- {summary['sd']:.3g} over {args.repeats} runs",
          file=sys.stderr)
    return EXIT_OK


def cmd_export_warpings(args) -> int:
    state = read_state(args.state)
    samples = state.samples
    if not samples:
        raise CLIError(EXIT_EMPTY, "state has no hyperparameter samples to export")
    if args.resample:
        obs, _, _ = observation_set(state)
        scfg = SamplerConfig(state.config.burn_in, args.resample, 1, state.config.max_stepout,
                             state.config.initial_width, state.seed)
        samples = sample_hypers(obs, state.config.hyper_priors(state.space), scfg, samples[-1],
                                rng=np.random.default_rng([state.seed, 4, state.n]))
    table = mean_warping_export(state, samples, args.grid)
    atomic_write(args.out, export_csv(table, state))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="warpbo", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("suggest", help="print the next point to evaluate and update the state")
    s.add_argument("--config", required=True)
    s.add_argument("--state", required=True)
    s.add_argument("--task")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_suggest)

    s = sub.add_parser("observe", help="record an evaluated point")
    s.add_argument("--state", required=True)
    s.add_argument("--task")
    s.add_argument("--point", required=True, help='JSON object {"name": value, ...} or list')
    s.add_argument("--value", required=True)
    s.set_defaults(func=cmd_observe)

    s = sub.add_parser("run", help="optimize an external objective command")
    s.add_argument("--config", required=True)
    s.add_argument("--state")
    s.add_argument("--trace", required=True)
    s.add_argument("--max-evals", type=int, required=True)
    s.add_argument("--task")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("bench", help="run a registered benchmark repeatedly")
    s.add_argument("name")
    s.add_argument("--evals", type=int, required=True)
    s.add_argument("--repeats", type=int, default=10)
    s.add_argument("--no-warping", action="store_true")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True, help="directory for traces and summary.json")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("export-warpings", help="write mean/sd warping curves per task and dimension")
    s.add_argument("--state", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--grid", type=int, default=101)
    s.add_argument("--resample", type=int, default=0,
                   help="draw this many fresh hyperparameter samples instead of the stored ones")
    s.set_defaults(func=cmd_export_warpings)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"warpbo: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"warpbo: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
