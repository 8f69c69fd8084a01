"""Built-in environments: a parametric chain, a discretized pendulum, random instances."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import (
    ConfigError,
    ParameterGrid,
    ParametricMDP,
    from_tables,
    require_valid,
    tabulate,
)

LEFT, RIGHT = 0, 1


@dataclass(frozen=True)
class ChainConfig:
    n_states: int = 5
    goal: int | tuple[int, ...] | None = None  # rewarded state(s); defaults to the right end
    success_low: float = 0.0
    success_high: float = 1.0
    gamma: float = 0.9
    segments_per_dim: int = 11
    flip_from: int | None = None  # states >= flip_from see the mirrored parameter 1 - psi
    mirror_left: bool = False  # LEFT succeeds with f(1 - psi) instead of f(psi)


class ChainFamily:
    """Two-action chain; a move succeeds with probability ``f(psi) = low + (high - low) * psi``.

    With ``flip_from`` set, states from that index on use ``f(1 - psi)``, so no
    single parameter value is worst everywhere along the chain.  With
    ``mirror_left`` the left move uses the mirrored parameter as well, so which
    direction is easier depends on psi.
    """

    def __init__(
        self,
        n_states: int,
        success_low: float,
        success_high: float,
        flip_from: int | None = None,
        mirror_left: bool = False,
    ):
        self.n_states = n_states
        self.low = success_low
        self.high = success_high
        self.flip_from = n_states if flip_from is None else flip_from
        self.mirror_left = mirror_left

    def success(self, psi: np.ndarray, s: int = 0, a: int = RIGHT) -> float:
        x = float(np.asarray(psi).reshape(-1)[0])
        if s >= self.flip_from:
            x = 1.0 - x
        if self.mirror_left and a == LEFT:
            x = 1.0 - x
        return float(self.low + (self.high - self.low) * x)

    def row(self, s: int, a: int, psi: np.ndarray) -> np.ndarray:
        f = self.success(psi, s, a)
        out = np.zeros(self.n_states)
        target = max(s - 1, 0) if a == LEFT else min(s + 1, self.n_states - 1)
        out[s] += 1.0 - f
        out[target] += f
        return out

    def table(self, psi: np.ndarray) -> np.ndarray:
        return np.stack([np.stack([self.row(s, a, psi) for a in (LEFT, RIGHT)]) for s in range(self.n_states)])


def build_chain(cfg: ChainConfig = ChainConfig()) -> ParametricMDP:
    if cfg.n_states < 2:
        raise ConfigError("chain needs at least 2 states")
    goals = (cfg.n_states - 1,) if cfg.goal is None else tuple(np.atleast_1d(cfg.goal).tolist())
    if not goals or any(not 0 <= g < cfg.n_states for g in goals):
        raise ConfigError(f"goal {cfg.goal} outside [0, {cfg.n_states})")
    goal = goals[0] if len(goals) == 1 else list(goals)
    grid = ParameterGrid(1, cfg.segments_per_dim)
    family = ChainFamily(cfg.n_states, cfg.success_low, cfg.success_high, cfg.flip_from, cfg.mirror_left)
    for p in range(grid.size):
        for s in range(cfg.n_states):
            for a in (LEFT, RIGHT):
                f = family.success(grid.point(p), s, a)
                if not 0.0 <= f <= 1.0:
                    raise ConfigError(f"success probability {f} at grid point {p} is outside [0, 1]")
    reward = np.zeros((cfg.n_states, 2))
    reward[list(goals), :] = 1.0
    mdp = from_tables(cfg.gamma, reward, tabulate(family, grid), grid, family, {"env": "chain", "goal": goal})
    return require_valid(mdp)


@dataclass(frozen=True)
class PendulumConfig:
    angle_bins: int = 15
    velocity_bins: int = 15
    torques: tuple[float, ...] = (-2.0, 0.0, 2.0)
    mass_range: tuple[float, float] = (0.5, 1.5)
    length_range: tuple[float, float] = (0.5, 1.5)
    dt: float = 0.05
    max_speed: float = 8.0
    gravity: float = 10.0
    gamma: float = 0.9
    segments_per_dim: int = 5


def angle_normalize(x):
    return (np.asarray(x) + np.pi) % (2 * np.pi) - np.pi


class PendulumFamily:
    """Pendulum (angle 0 is upright) discretized on an angle x velocity lattice.

    One semi-implicit Euler step from each lattice node, then bilinear
    (barycentric) weight splitting onto the enclosing lattice nodes.  Angles wrap.
    """

    def __init__(self, cfg: PendulumConfig):
        self.cfg = cfg
        na, nv = cfg.angle_bins, cfg.velocity_bins
        self.angles = angle_normalize(2 * np.pi * np.arange(na) / na)
        self.velocities = np.linspace(-cfg.max_speed, cfg.max_speed, nv)
        th, om = np.meshgrid(self.angles, self.velocities, indexing="ij")
        self.theta = th.reshape(-1)
        self.omega = om.reshape(-1)
        self.torques = np.asarray(cfg.torques, dtype=float)
        self.n_states = na * nv

    def physical(self, psi: np.ndarray) -> tuple[float, float]:
        psi = np.asarray(psi, dtype=float).reshape(-1)
        (m0, m1), (l0, l1) = self.cfg.mass_range, self.cfg.length_range
        return m0 + (m1 - m0) * psi[0], l0 + (l1 - l0) * psi[1]

    def step(self, theta, omega, torque, psi):
        """Next (angle, velocity) after one integration step."""
        m, length = self.physical(psi)
        g, dt = self.cfg.gravity, self.cfg.dt
        acc = 3 * g / (2 * length) * np.sin(theta) + 3.0 / (m * length**2) * torque
        new_omega = np.clip(omega + acc * dt, -self.cfg.max_speed, self.cfg.max_speed)
        return theta + new_omega * dt, new_omega

    def _spread(self, theta, omega):
        na, nv = self.cfg.angle_bins, self.cfg.velocity_bins
        u = np.mod(theta, 2 * np.pi) / (2 * np.pi / na)
        i0 = np.floor(u).astype(int)
        wi = u - i0
        i0 %= na
        i1 = (i0 + 1) % na
        v = (omega + self.cfg.max_speed) / (2 * self.cfg.max_speed) * (nv - 1)
        v = np.clip(v, 0.0, nv - 1)
        j0 = np.minimum(np.floor(v).astype(int), nv - 2)
        wj = v - j0
        j1 = j0 + 1
        idx = np.stack([i0 * nv + j0, i0 * nv + j1, i1 * nv + j0, i1 * nv + j1], axis=-1)
        w = np.stack([(1 - wi) * (1 - wj), (1 - wi) * wj, wi * (1 - wj), wi * wj], axis=-1)
        return idx, w

    def table(self, psi: np.ndarray) -> np.ndarray:
        S, A = self.n_states, len(self.torques)
        th = np.repeat(self.theta[:, None], A, axis=1)
        om = np.repeat(self.omega[:, None], A, axis=1)
        u = np.broadcast_to(self.torques[None, :], (S, A))
        idx, w = self._spread(*self.step(th, om, u, psi))
        out = np.zeros((S, A, S))
        ss, aa = np.meshgrid(np.arange(S), np.arange(A), indexing="ij")
        for c in range(4):
            np.add.at(out, (ss, aa, idx[..., c]), w[..., c])
        return out

    def row(self, s: int, a: int, psi: np.ndarray) -> np.ndarray:
        idx, w = self._spread(*self.step(self.theta[s], self.omega[s], self.torques[a], psi))
        out = np.zeros(self.n_states)
        np.add.at(out, idx, w)
        return out

    def reward(self) -> np.ndarray:
        cfg = self.cfg
        u_max = float(np.max(np.abs(self.torques))) if len(self.torques) else 0.0
        cost_max = np.pi**2 + 0.1 * cfg.max_speed**2 + 0.001 * u_max**2
        cost = (
            angle_normalize(self.theta)[:, None] ** 2
            + 0.1 * self.omega[:, None] ** 2
            + 0.001 * self.torques[None, :] ** 2
        )
        return 1.0 - cost / cost_max


def build_pendulum(cfg: PendulumConfig = PendulumConfig()) -> ParametricMDP:
    if cfg.angle_bins < 2 or cfg.velocity_bins < 2 or len(cfg.torques) < 1:
        raise ConfigError("pendulum needs >= 2 angle bins, >= 2 velocity bins and >= 1 torque")
    for name, (lo, hi) in (("mass_range", cfg.mass_range), ("length_range", cfg.length_range)):
        if lo <= 0 or hi < lo:
            raise ConfigError(f"{name} must be positive and ordered, got {(lo, hi)}")
    if cfg.dt <= 0 or cfg.max_speed <= 0:
        raise ConfigError("dt and max_speed must be positive")
    grid = ParameterGrid(2, cfg.segments_per_dim)
    family = PendulumFamily(cfg)
    meta = {
        "env": "pendulum",
        "mass_range": list(cfg.mass_range),
        "length_range": list(cfg.length_range),
        "torques": list(cfg.torques),
    }
    mdp = from_tables(cfg.gamma, family.reward(), tabulate(family, grid), grid, family, meta)
    return require_valid(mdp)


@dataclass(frozen=True)
class RandomInstanceConfig:
    n_states: int = 3
    n_actions: int = 2
    dims: int = 1
    segments_per_dim: int = 3
    gamma: float = 0.9
    deterministic: bool = False
    extra: dict = field(default_factory=dict)


def random_instance(rng: np.random.Generator, cfg: RandomInstanceConfig) -> ParametricMDP:
    """Instance with independent Dirichlet (or point-mass) kernels at every grid point."""
    grid = ParameterGrid(cfg.dims, cfg.segments_per_dim)
    S, A = cfg.n_states, cfg.n_actions
    if cfg.deterministic:
        nxt = rng.integers(0, S, size=(grid.size, S, A))
        kernels = np.zeros((grid.size, S, A, S))
        np.put_along_axis(kernels, nxt[..., None], 1.0, axis=-1)
    else:
        kernels = rng.dirichlet(np.ones(S), size=(grid.size, S, A))
        kernels /= kernels.sum(axis=-1, keepdims=True)
    reward = rng.uniform(0.0, 1.0, size=(S, A))
    return require_valid(from_tables(cfg.gamma, reward, kernels, grid, None, {"env": "random"}))
