"""Rollout engine and evaluation protocols.

Per-episode randomness comes from ``np.random.default_rng([seed, stream, episode])``
so results do not depend on how episodes are scheduled across workers.  Streams:
static-grid point ``g`` uses ``g``; schedule kind ``i`` uses ``SWEEP_STREAM + i``
(shifted by the schedule seed);
the learned-adversary protocol uses ``ADVERSARY_STREAM``.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import operators as ops
from .model import ContractViolation, ParametricMDP, StepBall, neighbor_table
from .policies import ObsClass, PolicyTable, lift, stacked_key, start_key
from .schedules import Schedule
from .solvers import (
    adversary_best_response,
    extract_oracle_policy,
    greedy_policy,
    solve_nominal,
    solve_rect,
    solve_tc,
)

SWEEP_STREAM = 1_000_000
ADVERSARY_STREAM = 2_000_000


class NormalizationError(ArithmeticError):
    pass


@dataclass(frozen=True)
class RolloutConfig:
    horizon: int = 1000
    episodes: int = 10
    seed: int = 0
    discounted: bool = False
    start_state: int | None = None  # None: uniform over states

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ContractViolation("horizon must be >= 1")
        if self.episodes < 1:
            raise ContractViolation("episodes must be >= 1")


@dataclass
class EvalResult:
    label: str
    returns: list[float]
    extra: dict = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(np.mean(self.returns))

    @property
    def sd(self) -> float:
        return float(np.std(self.returns, ddof=1)) if len(self.returns) > 1 else 0.0

    @property
    def sem(self) -> float:
        return self.sd / np.sqrt(len(self.returns))

    def row(self) -> dict:
        return {
            "condition": self.label,
            "mean": self.mean,
            "sd": self.sd,
            "n": len(self.returns),
            "min": float(np.min(self.returns)),
            "max": float(np.max(self.returns)),
        }

    def to_dict(self) -> dict:
        return {**self.row(), "returns": list(map(float, self.returns)), **self.extra}


@dataclass(frozen=True)
class Frozen:
    """Disturbance that keeps a continuous parameter fixed for the whole episode."""

    psi: tuple[float, ...]


def episode_rng(seed: int, stream: int, episode: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream, episode])


def _sample(cum: np.ndarray, u: float) -> int:
    return min(int(np.searchsorted(cum, u, side="right")), len(cum) - 1)


class _Agent:
    """Cumulative action tables and the observation plumbing of one policy."""

    def __init__(self, agent: PolicyTable, mdp: ParametricMDP):
        if agent.obs_class is ObsClass.ADVERSARY:
            raise ContractViolation("an adversary table cannot act as the agent")
        S, A = mdp.n_states, mdp.n_actions
        expected = {
            ObsClass.ORACLE: (S, mdp.grid.size, A),
            ObsClass.STACKED: (S, start_key(S, A) + 1, A),
            ObsClass.VANILLA: (S, A),
        }[agent.obs_class]
        if agent.probs.shape != expected:
            raise ContractViolation(f"{agent.obs_class.value} agent table {agent.probs.shape} != {expected}")
        self.obs = agent.obs_class
        self.cum = np.cumsum(agent.probs, axis=-1)
        self.n_actions = A

    def act(self, s: int, psi_index: int, key: int, u: float) -> int:
        if self.obs is ObsClass.ORACLE:
            return _sample(self.cum[s, psi_index], u)
        if self.obs is ObsClass.STACKED:
            return _sample(self.cum[s, key], u)
        return _sample(self.cum[s], u)


def _start_state(mdp: ParametricMDP, cfg: RolloutConfig, rng: np.random.Generator) -> int:
    if cfg.start_state is None:
        return int(rng.integers(mdp.n_states))
    if not 0 <= cfg.start_state < mdp.n_states:
        raise ContractViolation(f"start state {cfg.start_state} out of range")
    return cfg.start_state


def _episode(
    mdp: ParametricMDP,
    agent: _Agent,
    disturbance,
    cfg: RolloutConfig,
    rng: np.random.Generator,
    nbr: np.ndarray | None,
) -> float:
    H, S, A = cfg.horizon, mdp.n_states, mdp.n_actions
    u_agent = rng.random(H)
    u_env = rng.random(H)
    u_adv = rng.random(H)
    s = _start_state(mdp, cfg, rng)
    key = start_key(S, A)
    disc = mdp.gamma if cfg.discounted else 1.0
    weight, total = 1.0, 0.0

    if isinstance(disturbance, PolicyTable):
        adv_cum = np.cumsum(disturbance.probs, axis=-1)
        K = disturbance.probs.shape[1]
        p = int(rng.integers(mdp.grid.size))
        for t in range(H):
            a = agent.act(s, p, key, u_agent[t])
            total += weight * mdp.reward[s, a]
            weight *= disc
            b = _sample(adv_cum[s, key if K > 1 else 0, p, a], u_adv[t])
            p = int(nbr[p, b])
            key = stacked_key(s, a, A)
            s = _sample(np.cumsum(mdp.kernels[p, s, a]), u_env[t])
        return total

    if isinstance(disturbance, Frozen):
        table = np.cumsum(mdp.kernel_at(disturbance.psi), axis=-1)
        p = mdp.grid.nearest(disturbance.psi)
        for t in range(H):
            a = agent.act(s, p, key, u_agent[t])
            total += weight * mdp.reward[s, a]
            weight *= disc
            key = stacked_key(s, a, A)
            s = _sample(table[s, a], u_env[t])
        return total

    if isinstance(disturbance, Schedule):
        if disturbance.dims != mdp.grid.dims:
            raise ContractViolation("schedule dimension does not match the parameter grid")
        if disturbance.horizon < H:
            raise ContractViolation("schedule horizon is shorter than the rollout horizon")
        psi = disturbance.init(rng)
        for t in range(H):
            a = agent.act(s, mdp.grid.nearest(psi), key, u_agent[t])
            total += weight * mdp.reward[s, a]
            weight *= disc
            psi = disturbance.step(t + 1, psi, rng)
            key = stacked_key(s, a, A)
            s = _sample(np.cumsum(mdp.row_at(s, a, psi)), u_env[t])
        return total

    raise ContractViolation(f"unsupported disturbance {type(disturbance).__name__}")


def rollout(
    mdp: ParametricMDP,
    agent: PolicyTable,
    disturbance: Schedule | PolicyTable | Frozen,
    cfg: RolloutConfig,
    stream: int = 0,
) -> np.ndarray:
    """Per-episode returns of ``agent`` under a schedule, a learned adversary or a frozen parameter.

    Each step: the agent acts on its observation, the reward is collected, the
    disturbance moves the parameter, and the next state is drawn from the kernel
    at the new parameter.
    """
    runner = _Agent(agent, mdp)
    nbr = None
    if isinstance(disturbance, PolicyTable):
        if disturbance.obs_class is not ObsClass.ADVERSARY:
            raise ContractViolation("learned disturbances must be adversary tables")
        n_b = disturbance.probs.shape[-1]
        side = int(round(n_b ** (1.0 / mdp.grid.dims)))
        nbr = neighbor_table(mdp.grid, StepBall((side - 1) // 2))
        if nbr.shape[1] != n_b:
            raise ContractViolation("adversary table does not match any step ball on this grid")
    out = np.empty(cfg.episodes)
    for e in range(cfg.episodes):
        out[e] = _episode(mdp, runner, disturbance, cfg, episode_rng(cfg.seed, stream, e), nbr)
    return out


def _start_weights(mdp: ParametricMDP, cfg: RolloutConfig) -> np.ndarray:
    w = np.zeros(mdp.n_states)
    if cfg.start_state is None:
        w[:] = 1.0 / mdp.n_states
    else:
        w[cfg.start_state] = 1.0
    return w


def tc_worst_case_eval(
    agent: PolicyTable,
    mdp: ParametricMDP,
    ball_eval: StepBall | float,
    cfg: RolloutConfig,
    epsilon: float = 1e-10,
) -> EvalResult:
    """Best-respond to the agent with a learned TC adversary, then roll out against it.

    ``extra`` carries the exact discounted DP values: ``dp_mean`` averages the
    worst value over the start distribution and a uniform initial parameter;
    ``dp_worst`` takes the worst initial parameter instead.
    """
    ball = ball_eval if isinstance(ball_eval, StepBall) else StepBall.from_radius(ball_eval, mdp.grid)
    adversary, W, report = adversary_best_response(agent, mdp, ball, epsilon)
    k = start_key(mdp.n_states, mdp.n_actions) if agent.obs_class is ObsClass.STACKED else 0
    w0 = _start_weights(mdp, cfg)
    W0 = W[:, k, :]
    returns = rollout(mdp, agent, adversary, cfg, stream=ADVERSARY_STREAM)
    extra = {
        "radius_cells": ball.radius_cells,
        "dp_mean": float(w0 @ W0.mean(axis=1)),
        "dp_worst": float(w0 @ W0.min(axis=1)),
        "adversary_iterations": report.iterations,
    }
    return EvalResult("tc_worst", returns.tolist(), extra)


@dataclass
class StaticResult:
    worst: float
    average: float
    points: list[dict]


def static_points(dims: int, segments: int) -> np.ndarray:
    if segments < 2:
        raise ContractViolation("static evaluation needs at least 2 points per axis")
    axis = np.linspace(0.0, 1.0, segments)
    mesh = np.meshgrid(*([axis] * dims), indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def _static_point(args) -> np.ndarray:
    mdp, agent, psi, cfg, g = args
    return rollout(mdp, agent, Frozen(tuple(float(x) for x in psi)), cfg, stream=g)


def static_grid_eval(
    agent: PolicyTable, mdp: ParametricMDP, segments: int, cfg: RolloutConfig, workers: int = 1
) -> StaticResult:
    """Freeze the parameter at every point of a ``segments``-per-axis lattice.

    Worst case is the minimum of the per-point means, average case their mean.
    """
    pts = static_points(mdp.grid.dims, segments)
    jobs = [(mdp, agent, psi, cfg, g) for g, psi in enumerate(pts)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_static_point, jobs))
    else:
        results = [_static_point(j) for j in jobs]
    table = []
    for g, (psi, ret) in enumerate(zip(pts, results)):
        res = EvalResult(f"static[{g}]", ret.tolist())
        table.append({"index": g, "psi": psi.tolist(), **res.row()})
    means = np.array([row["mean"] for row in table])
    return StaticResult(float(means.min()), float(means.mean()), table)


def schedule_sweep(
    agent: PolicyTable,
    mdp: ParametricMDP,
    kinds: Sequence[str],
    cfg: RolloutConfig,
    radius: float = 0.1,
    schedule_horizon: int | None = None,
    schedule_seed: int = 0,
) -> dict[str, EvalResult]:
    """One result per schedule kind; kinds (and schedule seeds) draw from disjoint RNG streams."""
    if not kinds:
        raise ContractViolation("schedule_sweep needs at least one kind")
    horizon = cfg.horizon if schedule_horizon is None else schedule_horizon
    out = {}
    for i, kind in enumerate(kinds):
        sched = Schedule(kind, radius=radius, horizon=horizon, dims=mdp.grid.dims)
        stream = SWEEP_STREAM + len(kinds) * schedule_seed + i
        returns = rollout(mdp, agent, sched, cfg, stream=stream)
        out[str(sched.kind.value)] = EvalResult(f"schedule:{sched.kind.value}", returns.tolist())
    return out


def normalize_score(v: float, v_ref_low: float, v_ref_target: float) -> float:
    denom = abs(v_ref_target - v_ref_low)
    if denom <= 1e-12:
        raise NormalizationError("reference scores coincide; normalization is undefined")
    return (v - v_ref_low) / denom


def reference_agents(
    mdp: ParametricMDP, ball: StepBall, epsilon: float = 1e-10
) -> dict[str, PolicyTable]:
    """Nominal-trained (grid centre), rectangular-robust and TC-trained (oracle) agents.

    Nominal and rectangular agents see the state only; they are returned in that
    class and lifted by callers that need an oracle-shaped table.
    """
    centre = mdp.grid.nearest(np.full(mdp.grid.dims, 0.5))
    v_nom, _ = solve_nominal(mdp, centre, epsilon)
    q_nom = mdp.reward + mdp.gamma * (mdp.kernels[centre] @ v_nom)
    v_rect, _ = solve_rect(mdp, epsilon)
    q_rect = ops.param_payoffs(v_rect, mdp).min(axis=2)
    v_tc, _ = solve_tc(mdp, ball, ops.BackupMode.PURE, epsilon)
    tc_agent, _ = extract_oracle_policy(v_tc, mdp, ball, ops.BackupMode.PURE)
    return {
        "nominal": greedy_policy(q_nom, ObsClass.VANILLA),
        "rectangular": greedy_policy(q_rect, ObsClass.VANILLA),
        "tc": tc_agent,
    }


def as_oracle(agent: PolicyTable, mdp: ParametricMDP) -> PolicyTable:
    return lift(agent, ObsClass.ORACLE, mdp.grid.size)


def write_results_csv(rows: list[dict], path) -> None:
    cols = ["protocol", "agent", "seed", "condition", "mean", "sd", "n", "min", "max"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def rollout_config_dict(cfg: RolloutConfig) -> dict:
    return asdict(cfg)
