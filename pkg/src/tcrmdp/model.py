"""Parametric MDP models over a discretized parameter box.

The parameter set is always the unit box ``[0, 1]^d`` sampled on a regular
lattice with ``G`` points per axis.  Grid points are addressed either by a
multi-index (tuple of ints in ``[0, G-1]``) or by a flat row-major index; the
kernel tables are stored by flat index.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Any, Protocol, Sequence

import numpy as np

SIMPLEX_TOL = 1e-12


class ModelValidationError(ValueError):
    """Raised when a kernel row or reward leaves its admissible set."""


class ConfigError(ValueError):
    """Raised for invalid environment or grid configuration."""


class ContractViolation(ValueError):
    """Raised when a caller breaks an operation precondition."""


@dataclass(frozen=True)
class ParameterGrid:
    dims: int
    segments_per_dim: int

    def __post_init__(self) -> None:
        if self.dims < 1:
            raise ConfigError(f"dims must be >= 1, got {self.dims}")
        if self.segments_per_dim < 2:
            raise ConfigError(f"segments_per_dim must be >= 2, got {self.segments_per_dim}")

    @property
    def size(self) -> int:
        return self.segments_per_dim**self.dims

    @property
    def spacing(self) -> float:
        return 1.0 / (self.segments_per_dim - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.segments_per_dim,) * self.dims

    def multi_index(self, flat: int) -> tuple[int, ...]:
        if not 0 <= flat < self.size:
            raise IndexError(f"grid index {flat} out of range [0, {self.size})")
        return tuple(int(i) for i in np.unravel_index(flat, self.shape))

    def flat_index(self, idx: Sequence[int] | int) -> int:
        idx = (idx,) if np.isscalar(idx) else tuple(idx)
        if len(idx) != self.dims or any(not 0 <= i < self.segments_per_dim for i in idx):
            raise IndexError(f"grid index {idx} out of range for {self.shape}")
        return int(np.ravel_multi_index(idx, self.shape))

    def point(self, idx: Sequence[int] | int) -> np.ndarray:
        """Normalized coordinates of a grid point given by flat or multi index."""
        if np.isscalar(idx):
            idx = self.multi_index(int(idx))
        return np.asarray(idx, dtype=float) * self.spacing

    def points(self) -> np.ndarray:
        """All grid points, shape ``(size, dims)``, in flat-index order."""
        axes = np.indices(self.shape).reshape(self.dims, -1).T
        return axes.astype(float) * self.spacing

    def nearest(self, psi: Sequence[float]) -> int:
        """Flat index of the grid point nearest to a continuous parameter."""
        psi = np.clip(np.asarray(psi, dtype=float).reshape(self.dims), 0.0, 1.0)
        idx = np.rint(psi / self.spacing).astype(int)
        return self.flat_index(idx)


@dataclass(frozen=True)
class StepBall:
    """Per-step displacement set ``{delta in Z^d : |delta_i| <= k}`` (inf-norm, in cells)."""

    radius_cells: int
    norm: str = "Linf"

    def __post_init__(self) -> None:
        if self.radius_cells < 0:
            raise ConfigError(f"radius_cells must be >= 0, got {self.radius_cells}")
        if self.norm != "Linf":
            raise ConfigError(f"unsupported norm {self.norm!r}")

    @classmethod
    def from_radius(cls, radius: float, grid: ParameterGrid) -> "StepBall":
        """Snap a continuous normalized radius to whole grid cells."""
        if radius < 0:
            raise ConfigError(f"radius must be >= 0, got {radius}")
        return cls(int(round(radius * (grid.segments_per_dim - 1))))

    def displacements(self, dims: int) -> np.ndarray:
        """All displacements, shape ``((2k+1)^d, d)``; the null move is listed first."""
        k = self.radius_cells
        rng = range(-k, k + 1)
        moves = [m for m in itertools.product(rng, repeat=dims) if any(m)]
        return np.array([(0,) * dims] + moves, dtype=int).reshape(-1, dims)

    def contains(self, b: Sequence[int]) -> bool:
        return bool(np.all(np.abs(np.asarray(b, dtype=int)) <= self.radius_cells))


def apply_step(psi: Sequence[int], b: Sequence[int], ball: StepBall, grid: ParameterGrid) -> tuple[int, ...]:
    psi = np.asarray(psi, dtype=int)
    b = np.asarray(b, dtype=int)
    if psi.shape != (grid.dims,) or b.shape != (grid.dims,):
        raise ContractViolation("psi and b must both have grid.dims components")
    if not ball.contains(b):
        raise ContractViolation(f"displacement {tuple(b)} is outside the step ball k={ball.radius_cells}")
    if np.any(psi < 0) or np.any(psi >= grid.segments_per_dim):
        raise IndexError(f"grid index {tuple(psi)} out of range")
    out = np.clip(psi + b, 0, grid.segments_per_dim - 1)
    return tuple(int(i) for i in out)


def ball_neighbors(psi: Sequence[int], ball: StepBall, grid: ParameterGrid) -> set[tuple[int, ...]]:
    return {apply_step(psi, b, ball, grid) for b in ball.displacements(grid.dims)}


def neighbor_table(grid: ParameterGrid, ball: StepBall) -> np.ndarray:
    """Flat successor index for every (grid point, displacement), shape ``(|grid|, |B|)``.

    Column order follows :meth:`StepBall.displacements`, so column 0 is the null move.
    Clamped displacements may repeat a successor.
    """
    moves = ball.displacements(grid.dims)
    idx = np.indices(grid.shape).reshape(grid.dims, -1).T
    nxt = np.clip(idx[:, None, :] + moves[None, :, :], 0, grid.segments_per_dim - 1)
    return np.ravel_multi_index(tuple(np.moveaxis(nxt, -1, 0)), grid.shape)


class KernelFamily(Protocol):
    """Transition kernel defined at continuous parameters in ``[0, 1]^d``."""

    def table(self, psi: np.ndarray) -> np.ndarray: ...

    def row(self, s: int, a: int, psi: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class ParametricMDP:
    """Finite MDP with a transition kernel indexed by grid points.

    ``kernels`` has shape ``(|grid|, S, A, S)``; ``reward`` has shape ``(S, A)``
    and does not depend on the parameter.  ``family`` optionally evaluates the
    kernel at off-grid parameters (used for schedule rollouts and evaluation
    grids that differ from the solver grid).
    """

    gamma: float
    reward: np.ndarray
    kernels: np.ndarray
    grid: ParameterGrid
    family: KernelFamily | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in [0, 1), got {self.gamma}")
        n_psi, S, A, S2 = self.kernels.shape
        if S != S2 or self.reward.shape != (S, A) or n_psi != self.grid.size:
            raise ConfigError(
                f"inconsistent shapes: kernels {self.kernels.shape}, reward {self.reward.shape}, grid {self.grid.size}"
            )
        self.kernels.setflags(write=False)
        self.reward.setflags(write=False)

    @property
    def n_states(self) -> int:
        return self.reward.shape[0]

    @property
    def n_actions(self) -> int:
        return self.reward.shape[1]

    def kernel_at(self, psi: Sequence[float]) -> np.ndarray:
        """Kernel table ``(S, A, S)`` at a continuous parameter; nearest grid point without a family."""
        if self.family is not None:
            return self.family.table(np.asarray(psi, dtype=float))
        return self.kernels[self.grid.nearest(psi)]

    def row_at(self, s: int, a: int, psi: Sequence[float]) -> np.ndarray:
        if self.family is not None:
            return self.family.row(s, a, np.asarray(psi, dtype=float))
        return self.kernels[self.grid.nearest(psi), s, a]

    def with_gamma(self, gamma: float) -> "ParametricMDP":
        return ParametricMDP(gamma, self.reward.copy(), self.kernels.copy(), self.grid, self.family, dict(self.meta))


def kernel_eval(mdp: ParametricMDP, s: int, a: int, psi: Sequence[int] | int) -> np.ndarray:
    if not 0 <= s < mdp.n_states:
        raise IndexError(f"state {s} out of range")
    if not 0 <= a < mdp.n_actions:
        raise IndexError(f"action {a} out of range")
    flat = int(psi) if np.isscalar(psi) else mdp.grid.flat_index(psi)
    if not 0 <= flat < mdp.grid.size:
        raise IndexError(f"grid index {psi} out of range")
    row = mdp.kernels[flat, s, a]
    if abs(row.sum() - 1.0) > SIMPLEX_TOL or row.min() < 0.0:
        raise ModelValidationError(f"kernel row at (s={s}, a={a}, psi={psi}) is not a distribution")
    return row.copy()


@dataclass
class Violation:
    kind: str
    state: int
    action: int
    psi: int | None
    detail: str


def validate(mdp: ParametricMDP) -> list[Violation]:
    """Every simplex or reward-range violation; an empty list means the model is valid."""
    report = []
    sums = mdp.kernels.sum(axis=-1)
    mins = mdp.kernels.min(axis=-1)
    bad = (np.abs(sums - 1.0) > SIMPLEX_TOL) | (mins < 0.0)
    for p, s, a in zip(*np.nonzero(bad)):
        report.append(
            Violation("kernel", int(s), int(a), int(p), f"sum={sums[p, s, a]!r}, min={mins[p, s, a]!r}")
        )
    for s, a in zip(*np.nonzero((mdp.reward < 0.0) | (mdp.reward > 1.0))):
        report.append(Violation("reward", int(s), int(a), None, f"r={mdp.reward[s, a]!r}"))
    return report


def require_valid(mdp: ParametricMDP) -> ParametricMDP:
    report = validate(mdp)
    if report:
        first = report[0]
        raise ModelValidationError(f"{len(report)} violation(s); first: {first}")
    return mdp


def to_json_dict(mdp: ParametricMDP) -> dict[str, Any]:
    return {
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "gamma": mdp.gamma,
        "grid": {"dims": mdp.grid.dims, "segments_per_dim": mdp.grid.segments_per_dim},
        "reward": mdp.reward.tolist(),
        "kernels": [
            {"psi_index": p, "psi": mdp.grid.point(p).tolist(), "table": mdp.kernels[p].tolist()}
            for p in range(mdp.grid.size)
        ],
        "meta": mdp.meta,
    }


def dump_json(mdp: ParametricMDP, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_json_dict(mdp), fh)


def tabulate(family: KernelFamily, grid: ParameterGrid) -> np.ndarray:
    return np.stack([family.table(grid.point(p)) for p in range(grid.size)])


def from_tables(
    gamma: float,
    reward: np.ndarray,
    kernels: np.ndarray,
    grid: ParameterGrid,
    family: KernelFamily | None = None,
    meta: dict[str, Any] | None = None,
) -> ParametricMDP:
    return ParametricMDP(
        float(gamma),
        np.array(reward, dtype=float),
        np.array(kernels, dtype=float),
        grid,
        family,
        dict(meta or {}),
    )

