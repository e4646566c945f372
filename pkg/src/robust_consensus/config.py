"""Experiment configuration files.

Configs are YAML documents (JSON is a subset and parses too). The schema
is described in ``docs/config_schema.md``; every numeric parameter of an
experiment lives in its config file, never in command code.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .errors import ConfigError
from .model import Gaussian, ModelParams, Uniform, UncertaintySpec


@dataclass(frozen=True)
class InitialSpec:
    """Initial agent positions: ``uniform`` box per coordinate or ``disc`` in 2D."""

    kind: str
    low: float = 0.0
    high: float = 1.0
    center: tuple[float, ...] = ()
    radius: float = 1.0

    def sample(self, rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high, size=(n, dim))
        if self.kind == "disc":
            if dim != 2 or len(self.center) != 2:
                raise ConfigError("disc initial data needs dim = 2 and a 2D center")
            radius = self.radius * np.sqrt(rng.uniform(0.0, 1.0, size=n))
            angle = rng.uniform(0.0, 2.0 * np.pi, size=n)
            return np.asarray(self.center) + np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
        raise ConfigError(f"unknown initial distribution {self.kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed experiment description; ``extra`` keeps command-specific sections."""

    experiment: str
    model: dict
    uncertainty: UncertaintySpec | None
    initial: InitialSpec | None
    controls: tuple[str, ...]
    order: int
    quadrature_points: int | None
    T: float
    dt: float
    snapshots: int
    seed: int
    extra: dict = field(default_factory=dict)

    def params(self, **overrides) -> ModelParams:
        kw = dict(self.model)
        if self.uncertainty is not None:
            kw.setdefault("z", len(self.uncertainty))
        kw.update(overrides)
        try:
            return ModelParams(**kw)
        except TypeError as exc:
            raise ConfigError(f"model section: {exc}") from exc

    def with_seed(self, seed: int | None) -> "ExperimentConfig":
        return self if seed is None else dataclasses.replace(self, seed=int(seed))

    def initial_state(self, params: ModelParams) -> np.ndarray:
        """Initial positions drawn from a stream separate from the input draws."""
        if self.initial is None:
            raise ConfigError("config has no 'initial' section")
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([self.seed, 1])))
        return self.initial.sample(rng, params.n_agents, params.dim)


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing key '{key}' in {where}")
    return section[key]


def parse_component(entry: dict):
    if not isinstance(entry, dict):
        raise ConfigError(f"uncertainty entries must be mappings, got {entry!r}")
    kind = str(_require(entry, "kind", "uncertainty entry")).lower()
    try:
        if kind == "gaussian":
            return Gaussian(float(_require(entry, "mu", "gaussian")), float(_require(entry, "sigma2", "gaussian")))
        if kind == "uniform":
            return Uniform(float(_require(entry, "a", "uniform")), float(_require(entry, "b", "uniform")))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown uncertainty kind {kind!r}")


def parse_initial(entry: dict | None) -> InitialSpec | None:
    if entry is None:
        return None
    kind = str(_require(entry, "kind", "initial")).lower()
    if kind == "uniform":
        return InitialSpec(kind, low=float(_require(entry, "low", "initial")), high=float(_require(entry, "high", "initial")))
    if kind == "disc":
        return InitialSpec(
            kind,
            center=tuple(float(c) for c in _require(entry, "center", "initial")),
            radius=float(_require(entry, "radius", "initial")),
        )
    raise ConfigError(f"unknown initial distribution {kind!r}")


def parse_config(data: Any) -> ExperimentConfig:
    """Validate a loaded mapping and build an :class:`ExperimentConfig`."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    known = {"experiment", "model", "uncertainty", "initial", "controls", "gpc", "integrator", "seed"}
    model = dict(data.get("model") or {})
    unc = data.get("uncertainty")
    uncertainty = UncertaintySpec([parse_component(e) for e in unc]) if unc else None
    gpc = data.get("gpc") or {}
    integ = data.get("integrator") or {}
    try:
        cfg = ExperimentConfig(
            experiment=str(data.get("experiment", "")),
            model=model,
            uncertainty=uncertainty,
            initial=parse_initial(data.get("initial")),
            controls=tuple(data.get("controls") or ()),
            order=int(gpc.get("order", 1)),
            quadrature_points=None if gpc.get("quadrature_points") is None else int(gpc["quadrature_points"]),
            T=float(integ.get("T", 1.0)),
            dt=float(integ.get("dt", 1e-3)),
            snapshots=int(integ.get("snapshots", 100)),
            seed=int(data.get("seed", 0)),
            extra={k: v for k, v in data.items() if k not in known},
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    if cfg.order < 0:
        raise ConfigError(f"gpc.order must be >= 0, got {cfg.order}")
    if not cfg.T > 0 or not cfg.dt > 0 or cfg.snapshots < 1:
        raise ConfigError("integrator needs T > 0, dt > 0 and snapshots >= 1")
    if model:
        cfg.params()  # validate eagerly
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return parse_config(data)
