"""Experiment configuration: YAML parsing and schema validation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import yaml

MODELS = ("xy", "ebb", "spin_fermion", "spin_lattice", "custom")
TASKS = ("distribution", "cgf", "symmetry_suite", "bounds_suite", "asymptotics", "sample", "linear_response")


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass
class ExperimentConfig:
    model: str
    params: dict
    beta: np.ndarray
    tasks: list
    t_list: list
    alpha_axes: list
    theta_list: list
    seed: int | None
    output_dir: str
    format: str
    options: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @property
    def ell(self) -> int:
        return self.beta.size

    def alpha_points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.alpha_axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)


def load_yaml(path) -> dict:
    with open(path) as fh:
        text = fh.read()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError("", f"parse error{where}: {getattr(exc, 'problem', exc)}") from exc
    if not isinstance(data, dict):
        raise ConfigError("", "top level must be a mapping")
    return data


def _floats(value, path, length=None) -> list:
    if isinstance(value, (int, float)):
        value = [value]
    if not isinstance(value, list) or not all(isinstance(v, (int, float)) for v in value):
        raise ConfigError(path, "expected a number or a list of numbers")
    if length is not None and len(value) != length:
        raise ConfigError(path, f"expected {length} entries, got {len(value)}")
    return [float(v) for v in value]


def parse_config(data: dict, overrides: dict | None = None) -> ExperimentConfig:
    overrides = overrides or {}
    model = data.get("model")
    if not isinstance(model, dict) or "kind" not in model:
        raise ConfigError("model", "expected a mapping with a 'kind' key")
    kind = model["kind"]
    if kind not in MODELS:
        raise ConfigError("model.kind", f"must be one of {', '.join(MODELS)}")
    params = {k: v for k, v in model.items() if k != "kind"}

    if "beta" not in data:
        raise ConfigError("beta", "required")
    beta = np.array(_floats(data["beta"], "beta"))
    if np.any(beta < 0):
        raise ConfigError("beta", "inverse temperatures must be non-negative")

    tasks = data.get("tasks")
    if not isinstance(tasks, list) or not tasks:
        raise ConfigError("tasks", "at least one task is required")
    for i, t in enumerate(tasks):
        if t not in TASKS:
            raise ConfigError(f"tasks[{i}]", f"unknown task {t!r}; choose from {', '.join(TASKS)}")

    t_list = _floats(data.get("t_list", [1.0]), "t_list")
    if any(t < 0 for t in t_list):
        raise ConfigError("t_list", "times must be non-negative")

    ell = beta.size
    ag = data.get("alpha_grid", {"min": -0.5, "max": 0.5, "count": 3})
    if not isinstance(ag, dict):
        raise ConfigError("alpha_grid", "expected a mapping with min/max/count")
    lo = _floats(ag.get("min", -0.5), "alpha_grid.min")
    hi = _floats(ag.get("max", 0.5), "alpha_grid.max")
    cnt = ag.get("count", 3)
    cnt = [cnt] if isinstance(cnt, int) else cnt
    if not isinstance(cnt, list) or not all(isinstance(c, int) for c in cnt):
        raise ConfigError("alpha_grid.count", "expected an integer or a list of integers")
    lo, hi, cnt = (x * ell if len(x) == 1 else x for x in (lo, hi, cnt))
    for name, x in (("min", lo), ("max", hi), ("count", cnt)):
        if len(x) != ell:
            raise ConfigError(f"alpha_grid.{name}", f"expected {ell} entries (one per reservoir)")
    for j, c in enumerate(cnt):
        if c < 1 or c % 2 == 0:
            raise ConfigError(f"alpha_grid.count[{j}]", "counts must be odd so the grid contains 0")
        if c > 1 and not lo[j] < 0 < hi[j]:
            raise ConfigError(f"alpha_grid.min[{j}]", "grid must straddle 0")
    axes = [np.linspace(a, b, c) if c > 1 else np.zeros(1) for a, b, c in zip(lo, hi, cnt)]

    seed = overrides.get("seed", data.get("seed"))
    if "sample" in tasks and seed is None:
        raise ConfigError("seed", "a seed is required when the 'sample' task is present")
    if seed is not None and not isinstance(seed, int):
        raise ConfigError("seed", "must be an integer")

    fmt = overrides.get("format") or data.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError("format", "must be csv or json")

    theta = _floats(data.get("theta_list", [0.5, -0.5]), "theta_list")
    options = {k: data[k] for k in TASKS if isinstance(data.get(k), dict)}
    return ExperimentConfig(
        model=kind,
        params=params,
        beta=beta,
        tasks=list(tasks),
        t_list=t_list,
        alpha_axes=axes,
        theta_list=theta,
        seed=seed,
        output_dir=overrides.get("output_dir") or data.get("output_dir", "heatfcs-out"),
        format=fmt,
        options=options,
        raw=data,
    )
