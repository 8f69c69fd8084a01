"""Experiment configuration: nested dataclasses loaded from YAML or JSON.

Every block rejects unknown keys, and the whole config validates before any
computation starts.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .envs import ChainConfig, PendulumConfig, build_chain, build_pendulum
from .model import ConfigError, ParametricMDP, StepBall
from .schedules import KINDS

OPERATORS = ("nominal", "rect", "param", "tc")
MODES = ("pure", "mixed")
CLASSES = ("vanilla", "stacked", "oracle")
PROTOCOLS = ("tc_worst", "static", "schedules")


@dataclass
class EnvConfig:
    kind: str = "chain"
    gamma: float = 0.9
    # chain
    n_states: int = 5
    goal: int | list[int] | None = None
    success_range: tuple[float, float] = (0.1, 0.9)
    flip_from: int | None = None
    mirror_left: bool = False
    # pendulum
    angle_bins: int = 15
    velocity_bins: int = 15
    torques: tuple[float, ...] = (-2.0, 0.0, 2.0)
    mass_range: tuple[float, float] = (0.5, 1.5)
    length_range: tuple[float, float] = (0.5, 1.5)
    dt: float = 0.05

    def validate(self) -> None:
        if self.kind not in ("chain", "pendulum"):
            raise ConfigError(f"env.kind must be 'chain' or 'pendulum', got {self.kind!r}")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"env.gamma must lie in [0, 1), got {self.gamma}")
        if len(self.success_range) != 2:
            raise ConfigError("env.success_range needs two numbers")


@dataclass
class GridConfig:
    segments_per_dim: int = 11

    def validate(self) -> None:
        if self.segments_per_dim < 2:
            raise ConfigError("grid.segments_per_dim must be >= 2")


@dataclass
class BallConfig:
    radius: float = 0.1

    def validate(self) -> None:
        if self.radius < 0:
            raise ConfigError("ball.radius must be >= 0")


@dataclass
class SolverConfig:
    operator: str = "tc"
    mode: str = "mixed"
    epsilon: float = 1e-8
    max_iters: int = 100_000
    rounds: int = 5
    classes: tuple[str, ...] = CLASSES

    def validate(self) -> None:
        if self.operator not in OPERATORS:
            raise ConfigError(f"solver.operator must be one of {OPERATORS}")
        if self.mode not in MODES:
            raise ConfigError(f"solver.mode must be one of {MODES}")
        if self.epsilon <= 0 or self.max_iters < 1 or self.rounds < 1:
            raise ConfigError("solver.epsilon > 0, solver.max_iters >= 1 and solver.rounds >= 1 are required")
        bad = set(self.classes) - set(CLASSES)
        if bad or not self.classes:
            raise ConfigError(f"solver.classes must be a non-empty subset of {CLASSES}")


@dataclass
class EvalConfig:
    protocols: tuple[str, ...] = PROTOCOLS
    episodes: int = 5
    horizon: int = 1000
    segments: int = 10
    radius: float = 0.001
    discounted: bool = False
    start_state: int | None = None

    def validate(self) -> None:
        bad = set(self.protocols) - set(PROTOCOLS)
        if bad or not self.protocols:
            raise ConfigError(f"eval.protocols must be a non-empty subset of {PROTOCOLS}")
        if self.episodes < 1 or self.horizon < 1 or self.segments < 2 or self.radius < 0:
            raise ConfigError("eval needs episodes >= 1, horizon >= 1, segments >= 2, radius >= 0")


@dataclass
class ScheduleConfig:
    kinds: tuple[str, ...] = KINDS
    radius: float = 0.1
    horizon: int = 1000
    seed: int = 0

    def validate(self) -> None:
        bad = set(self.kinds) - set(KINDS)
        if bad or not self.kinds:
            raise ConfigError(f"schedule.kinds must be a non-empty subset of {KINDS}")
        if self.radius < 0 or self.horizon < 1:
            raise ConfigError("schedule.radius >= 0 and schedule.horizon >= 1 are required")


@dataclass
class CheckConfig:
    instances: int = 50
    pairs: int = 20
    sequences: int = 100
    sequence_length: int = 40
    inject_drift: bool = False

    def validate(self) -> None:
        if min(self.instances, self.pairs, self.sequences, self.sequence_length) < 1:
            raise ConfigError("check counts must be >= 1")


@dataclass
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    ball: BallConfig = field(default_factory=BallConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    check: CheckConfig = field(default_factory=CheckConfig)
    seeds: tuple[int, ...] = (0,)
    output: str | None = None

    def validate(self) -> "ExperimentConfig":
        for block in (self.env, self.grid, self.ball, self.solver, self.eval, self.schedule, self.check):
            block.validate()
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        return self

    def to_dict(self) -> dict[str, Any]:
        return json.loads(json.dumps(dataclasses.asdict(self)))

    def hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _coerce(value, default):
    if isinstance(default, tuple) and isinstance(value, list):
        return tuple(value)
    if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def _block(cls, data: dict | None, name: str):
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{name} must be a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in {name}: {', '.join(unknown)}")
    defaults = cls()
    kwargs = {k: _coerce(v, getattr(defaults, k)) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad {name} block: {exc}") from exc


_BLOCKS = {
    "env": EnvConfig,
    "grid": GridConfig,
    "ball": BallConfig,
    "solver": SolverConfig,
    "eval": EvalConfig,
    "schedule": ScheduleConfig,
    "check": CheckConfig,
}


def from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    unknown = sorted(set(data) - set(_BLOCKS) - {"seeds", "output"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    blocks = {name: _block(cls, data.get(name), name) for name, cls in _BLOCKS.items()}
    seeds = data.get("seeds", [0])
    if isinstance(seeds, int):
        seeds = [seeds]
    cfg = ExperimentConfig(**blocks, seeds=tuple(int(s) for s in seeds), output=data.get("output"))
    return cfg.validate()


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return from_dict(data or {})


def build_model(cfg: ExperimentConfig) -> ParametricMDP:
    e = cfg.env
    if e.kind == "chain":
        lo, hi = e.success_range
        return build_chain(
            ChainConfig(
                n_states=e.n_states,
                goal=tuple(e.goal) if isinstance(e.goal, (list, tuple)) else e.goal,
                success_low=lo,
                success_high=hi,
                gamma=e.gamma,
                segments_per_dim=cfg.grid.segments_per_dim,
                flip_from=e.flip_from,
                mirror_left=e.mirror_left,
            )
        )
    return build_pendulum(
        PendulumConfig(
            angle_bins=e.angle_bins,
            velocity_bins=e.velocity_bins,
            torques=tuple(e.torques),
            mass_range=tuple(e.mass_range),
            length_range=tuple(e.length_range),
            dt=e.dt,
            gamma=e.gamma,
            segments_per_dim=cfg.grid.segments_per_dim,
        )
    )


def build_ball(cfg: ExperimentConfig, mdp: ParametricMDP, radius: float | None = None) -> StepBall:
    return StepBall.from_radius(cfg.ball.radius if radius is None else radius, mdp.grid)
