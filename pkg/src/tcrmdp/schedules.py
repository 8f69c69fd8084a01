"""Fixed (non-learned) parameter schedules with a per-step inf-norm bound.

Each schedule draws its episode state in :meth:`Schedule.init` and then emits
``psi_1, ..., psi_T`` through :meth:`Schedule.step`.  Every emitted step moves
at most ``radius`` in inf-norm and stays inside ``[0, 1]^d``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .model import ContractViolation

KINDS = ("random", "cosine", "linear", "exponential", "logarithmic")


class ScheduleKind(str, Enum):
    RANDOM = "random"
    COSINE = "cosine"
    LINEAR = "linear"
    EXPONENTIAL = "exponential"
    LOGARITHMIC = "logarithmic"


def _curve(kind: ScheduleKind, tau: float) -> float:
    if kind is ScheduleKind.LINEAR:
        return tau
    if kind is ScheduleKind.EXPONENTIAL:
        return (1.0 - np.exp(-5.0 * tau)) / (1.0 - np.exp(-5.0))
    if kind is ScheduleKind.LOGARITHMIC:
        return np.log1p(9.0 * tau) / np.log(10.0)
    raise ValueError(kind)


def _bounded_move(prev: np.ndarray, target: np.ndarray, radius: float) -> np.ndarray:
    step = target - prev
    out = np.where(np.abs(step) <= radius, target, prev + np.sign(step) * radius)
    return np.clip(out, 0.0, 1.0)


@dataclass
class Schedule:
    kind: ScheduleKind | str
    radius: float = 0.1
    horizon: int = 1000
    dims: int = 1
    psi0: np.ndarray | None = field(default=None, repr=False)
    vertex: np.ndarray | None = field(default=None, repr=False)
    phase: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.kind = ScheduleKind(self.kind)
        if self.radius < 0:
            raise ContractViolation("radius must be >= 0")
        if self.horizon < 1:
            raise ContractViolation("horizon must be >= 1")

    def init(self, rng: np.random.Generator) -> np.ndarray:
        """Draw ``psi_0`` uniformly on the box plus the kind's episode constants."""
        self.psi0 = rng.uniform(0.0, 1.0, size=self.dims)
        self.vertex = None
        self.phase = None
        if self.kind in (ScheduleKind.LINEAR, ScheduleKind.EXPONENTIAL, ScheduleKind.LOGARITHMIC):
            self.vertex = rng.integers(0, 2, size=self.dims).astype(float)
        elif self.kind is ScheduleKind.COSINE:
            self.phase = rng.uniform(0.0, 2 * np.pi, size=self.dims)
        return self.psi0.copy()

    def step(self, t: int, psi_prev: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if not 1 <= t <= self.horizon:
            raise ContractViolation(f"t={t} outside [1, {self.horizon}]")
        if self.psi0 is None:
            raise ContractViolation("call init() before step()")
        psi_prev = np.asarray(psi_prev, dtype=float)
        L = self.radius
        if self.kind is ScheduleKind.RANDOM:
            u = rng.uniform(-L, L, size=self.dims)
            return np.clip(psi_prev + u, 0.0, 1.0)
        if self.kind is ScheduleKind.COSINE:
            amp = np.minimum(self.psi0, 1.0 - self.psi0)
            omega = L / np.maximum(amp, 1e-9)
            # anchored so that the curve passes through psi_0 at t = 0
            target = self.psi0 + amp * (np.cos(omega * t + self.phase) - np.cos(self.phase))
            return _bounded_move(psi_prev, np.clip(target, 0.0, 1.0), L)
        frac = _curve(self.kind, t / self.horizon)
        target = self.psi0 + (self.vertex - self.psi0) * frac
        return _bounded_move(psi_prev, target, L)

    def trajectory(self, rng: np.random.Generator) -> np.ndarray:
        """``psi_0 .. psi_T`` as an array of shape ``(T + 1, d)``."""
        out = np.empty((self.horizon + 1, self.dims))
        out[0] = self.init(rng)
        for t in range(1, self.horizon + 1):
            out[t] = self.step(t, out[t - 1], rng)
        return out


def schedule_init(schedule: Schedule, rng: np.random.Generator) -> np.ndarray:
    return schedule.init(rng)


def schedule_step(schedule: Schedule, t: int, psi_prev: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return schedule.step(t, psi_prev, rng)


def max_step(traj: np.ndarray) -> float:
    if len(traj) < 2:
        return 0.0
    return float(np.max(np.abs(np.diff(traj, axis=0))))


def write_trajectory_csv(traj: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"psi_{i + 1}" for i in range(traj.shape[1])])
        for t, row in enumerate(traj):
            w.writerow([t] + [repr(float(x)) for x in row])
