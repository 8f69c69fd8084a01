"""Drift-bounded MDP sequences, occupancy measures and the Lipschitz bound on
the robust objective for state-only policies.

A *sequence* here is a time-indexed list of stationary MDPs ``M_t`` that share
states, actions and discount.  The return ``J(pi, M_t)`` is the stationary
discounted return of ``pi`` in ``M_t`` from a start distribution ``rho``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .model import ContractViolation, ParameterGrid, StepBall, neighbor_table
from .policies import ObsClass, PolicyTable, check_rows
from .schedules import Schedule

BOUND_SLACK = 1e-9


class DriftViolation(ValueError):
    """A sequence exceeds its declared kernel or reward drift bound."""


class NumericalError(ArithmeticError):
    pass


class BudgetError(RuntimeError):
    pass


@dataclass(frozen=True)
class StationaryMDP:
    kernel: np.ndarray  # (S, A, S)
    reward: np.ndarray  # (S, A), entries in [0, 1]
    gamma: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma < 1.0:
            raise ContractViolation(f"gamma must be in [0, 1), got {self.gamma}")
        if self.kernel.shape[:2] != self.reward.shape or self.kernel.shape[0] != self.kernel.shape[2]:
            raise ContractViolation("kernel must be (S, A, S) and reward (S, A)")

    @property
    def n_states(self) -> int:
        return self.reward.shape[0]


@dataclass
class MDPSequence:
    mdps: list[StationaryMDP]
    L_P: float
    L_r: float
    psi: np.ndarray | None = None  # generating parameter path, when known

    def __len__(self) -> int:
        return len(self.mdps)

    def drifts(self) -> list[tuple[float, float]]:
        return [drift_measure(a, b) for a, b in zip(self.mdps[:-1], self.mdps[1:])]

    def validate(self, tol: float = 1e-12) -> None:
        for t, (dp, dr) in enumerate(self.drifts()):
            if dp > self.L_P + tol or dr > self.L_r + tol:
                raise DriftViolation(
                    f"step {t}->{t + 1}: kernel drift {dp:.3g} (bound {self.L_P:.3g}), "
                    f"reward drift {dr:.3g} (bound {self.L_r:.3g})"
                )


def drift_measure(m1: StationaryMDP, m2: StationaryMDP) -> tuple[float, float]:
    """Largest L1 kernel-row change and largest absolute reward change over (s, a)."""
    if m1.kernel.shape != m2.kernel.shape or m1.reward.shape != m2.reward.shape:
        raise ContractViolation("drift_measure needs MDPs of identical shape")
    dk = float(np.abs(m1.kernel - m2.kernel).sum(axis=-1).max())
    dr = float(np.abs(m1.reward - m2.reward).max())
    return dk, dr


def _vanilla(pi: PolicyTable | np.ndarray, n_states: int) -> np.ndarray:
    probs = pi.probs if isinstance(pi, PolicyTable) else np.asarray(pi, dtype=float)
    if isinstance(pi, PolicyTable) and pi.obs_class is not ObsClass.VANILLA:
        raise ContractViolation("theory checks take state-only policies")
    if probs.ndim != 2 or probs.shape[0] != n_states:
        raise ContractViolation("policy must be an (S, A) table")
    check_rows(probs)
    return probs


def _start(start: np.ndarray | None, n: int) -> np.ndarray:
    if start is None:
        return np.full(n, 1.0 / n)
    start = np.asarray(start, dtype=float)
    if start.shape != (n,) or start.min() < 0 or abs(start.sum() - 1.0) > 1e-9:
        raise ContractViolation("start must be a distribution over states")
    return start


def induced_chain(pi, M: StationaryMDP) -> tuple[np.ndarray, np.ndarray]:
    """State transition matrix ``P_pi[s, s']`` and expected reward ``r_pi[s]``."""
    probs = _vanilla(pi, M.n_states)
    return np.einsum("sa,saz->sz", probs, M.kernel), np.einsum("sa,sa->s", probs, M.reward)


def occupancy(pi, M: StationaryMDP, start: np.ndarray | None = None) -> np.ndarray:
    """Normalized discounted state occupancy, solved from the flow equations."""
    rho = _start(start, M.n_states)
    P, _ = induced_chain(pi, M)
    lhs = np.eye(M.n_states) - M.gamma * P.T
    try:
        d = np.linalg.solve(lhs, (1.0 - M.gamma) * rho)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("occupancy system is singular") from exc
    if abs(d.sum() - 1.0) > 1e-9 or d.min() < -1e-12:
        raise NumericalError("occupancy solve lost normalization")
    return np.maximum(d, 0.0)


def policy_value(pi, M: StationaryMDP) -> np.ndarray:
    P, r = induced_chain(pi, M)
    return np.linalg.solve(np.eye(M.n_states) - M.gamma * P, r)


def return_via_occupancy(pi, M: StationaryMDP, start: np.ndarray | None = None) -> float:
    probs = _vanilla(pi, M.n_states)
    d = occupancy(probs, M, start)
    return float(d @ np.einsum("sa,sa->s", probs, M.reward) / (1.0 - M.gamma))


def truncated_return(pi, M: StationaryMDP, start: np.ndarray | None, horizon: int) -> float:
    """``sum_{k < H} gamma^k E[r_k]``; differs from the full return by at most ``gamma^H / (1 - gamma)``."""
    rho = _start(start, M.n_states)
    P, r = induced_chain(pi, M)
    total, dist, w = 0.0, rho.copy(), 1.0
    for _ in range(horizon):
        total += w * float(dist @ r)
        dist = dist @ P
        w *= M.gamma
    return total


def _return(pi, M, start, horizon):
    return return_via_occupancy(pi, M, start) if horizon is None else truncated_return(pi, M, start, horizon)


class TheoryChainFamily:
    """Two-action chain whose success probability and reward both move with psi.

    Success probability ``low + (high - low) * psi``; reward
    ``r(s, a, psi) = (s / (n - 1)) * (1 - slope * psi)``.
    """

    def __init__(self, n_states: int = 5, low: float = 0.1, high: float = 0.9, slope: float = 0.5, gamma: float = 0.9):
        if n_states < 2 or not (0 <= low <= high <= 1) or not 0 <= slope <= 1:
            raise ContractViolation("invalid theory chain parameters")
        self.n_states, self.low, self.high, self.slope, self.gamma = n_states, low, high, slope, gamma

    def mdp_at(self, psi: float) -> StationaryMDP:
        psi = float(np.clip(np.asarray(psi, dtype=float).reshape(-1)[0], 0.0, 1.0))
        n = self.n_states
        f = self.low + (self.high - self.low) * psi
        kernel = np.zeros((n, 2, n))
        for s in range(n):
            for a, target in ((0, max(s - 1, 0)), (1, min(s + 1, n - 1))):
                kernel[s, a, s] += 1.0 - f
                kernel[s, a, target] += f
        base = np.arange(n) / (n - 1)
        reward = np.repeat((base * (1.0 - self.slope * psi))[:, None], 2, axis=1)
        return StationaryMDP(kernel, reward, self.gamma)

    def drift_bounds(self, step: float) -> tuple[float, float]:
        """Kernel and reward drift implied by a parameter move of at most ``step``."""
        return 2.0 * (self.high - self.low) * step, self.slope * step


def sequence_from_path(family: TheoryChainFamily, psi_path: np.ndarray, step_bound: float) -> MDPSequence:
    """Push a parameter path through the family, declare drift bounds, then validate them."""
    psi_path = np.asarray(psi_path, dtype=float).reshape(len(psi_path), -1)
    L_P, L_r = family.drift_bounds(step_bound)
    seq = MDPSequence([family.mdp_at(p) for p in psi_path], L_P, L_r, psi_path)
    seq.validate()
    return seq


def sequence_from_schedule(
    family: TheoryChainFamily, schedule: Schedule, rng: np.random.Generator, length: int | None = None
) -> MDPSequence:
    traj = schedule.trajectory(rng)
    if length is not None:
        traj = traj[: length + 1]
    return sequence_from_path(family, traj[:, :1], schedule.radius)


@dataclass(frozen=True)
class GridSequenceFamily:
    """All parameter paths on a 1-d grid that start at ``start_index`` and move within ``ball`` per step."""

    family: TheoryChainFamily
    grid: ParameterGrid
    ball: StepBall
    start_index: int = 0

    def drift_bounds(self) -> tuple[float, float]:
        return self.family.drift_bounds(self.ball.radius_cells * self.grid.spacing)

    def mdp(self, index: int) -> StationaryMDP:
        return self.family.mdp_at(self.grid.point(index))


def robust_objective(
    pi,
    family: GridSequenceFamily | MDPSequence,
    t: int,
    horizon: int | None = None,
    start: np.ndarray | None = None,
    budget: int = 10**7,
) -> tuple[float, float]:
    """Worst return at episode ``t`` over all drift-feasible sequences, plus the truncation error.

    For a grid family the minimum runs over the endpoints of every feasible
    parameter path of length ``t``; those endpoints are propagated as a
    reachable set.  A fixed ``MDPSequence`` is its own single feasible path.
    """
    trunc = 0.0
    if isinstance(family, MDPSequence):
        if not 0 <= t < len(family):
            raise ContractViolation(f"t={t} outside the sequence")
        M = family.mdps[t]
        if horizon is not None:
            trunc = M.gamma**horizon / (1.0 - M.gamma)
        return _return(pi, M, start, horizon), trunc
    if t < 0:
        raise ContractViolation("t must be >= 0")
    nbr = neighbor_table(family.grid, family.ball)
    if t * nbr.size > budget:
        raise BudgetError(f"{t} propagation steps over {nbr.size} moves exceed the budget")
    reach = np.zeros(family.grid.size, dtype=bool)
    reach[family.start_index] = True
    for _ in range(t):
        nxt = np.zeros_like(reach)
        nxt[nbr[reach].ravel()] = True
        reach = nxt
    vals = [_return(pi, family.mdp(int(i)), start, horizon) for i in np.flatnonzero(reach)]
    if horizon is not None:
        trunc = family.family.gamma**horizon / (1.0 - family.family.gamma)
    return float(min(vals)), trunc


def lipschitz_constant(gamma: float, L_P: float, L_r: float) -> float:
    return gamma / (1.0 - gamma) ** 2 * L_P + L_r / (1.0 - gamma)


def one_step_bound(gamma: float, L_P: float, L_r: float) -> float:
    return L_r / (1.0 - gamma) + gamma * L_P / (1.0 - gamma) ** 2


@dataclass
class BoundCheck:
    t0: int
    t: int
    lhs: float
    rhs: float
    holds: bool
    constant: float
    pair_gaps: list[float] = field(default_factory=list)
    pair_bound: float = 0.0
    pairs_hold: bool = True

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    def to_dict(self) -> dict:
        return {
            "t0": self.t0,
            "t": self.t,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "holds": self.holds,
            "L_prime": self.constant,
            "one_step_bound": self.pair_bound,
            "one_step_gaps": self.pair_gaps,
            "one_step_holds": self.pairs_hold,
        }


def lipschitz_bound_check(
    pi,
    family: GridSequenceFamily | MDPSequence,
    t0: int,
    t: int,
    start: np.ndarray | None = None,
) -> BoundCheck:
    """Compare ``|J^R(t0) - J^R(t0 + t)|`` with ``L' t`` and check every one-step return gap.

    Sequences are validated against their declared drift bounds first; a
    violation raises :class:`DriftViolation`.
    """
    if t < 0 or t0 < 0:
        raise ContractViolation("t0 and t must be >= 0")
    if isinstance(family, MDPSequence):
        family.validate()
        gamma = family.mdps[0].gamma
        L_P, L_r = family.L_P, family.L_r
        mdps = family.mdps[t0 : t0 + t + 1]
        if len(mdps) != t + 1:
            raise ContractViolation("sequence too short for the requested window")
    else:
        gamma = family.family.gamma
        L_P, L_r = family.drift_bounds()
        path = [family.start_index]
        nbr = neighbor_table(family.grid, family.ball)
        for _ in range(t0 + t):
            path.append(int(nbr[path[-1], -1]))  # one feasible path for the pairwise check
        mdps = [family.mdp(i) for i in path[t0:]]
        MDPSequence(mdps, L_P, L_r).validate()
    j0, _ = robust_objective(pi, family, t0, start=start)
    j1, _ = robust_objective(pi, family, t0 + t, start=start)
    const = lipschitz_constant(gamma, L_P, L_r)
    lhs, rhs = abs(j0 - j1), const * t
    pair_bound = one_step_bound(gamma, L_P, L_r)
    js = [return_via_occupancy(pi, M, start) for M in mdps]
    gaps = [abs(a - b) for a, b in zip(js[:-1], js[1:])]
    pairs_hold = all(g <= pair_bound + BOUND_SLACK for g in gaps)
    return BoundCheck(t0, t, lhs, rhs, lhs <= rhs + BOUND_SLACK, const, gaps, pair_bound, pairs_hold)


def write_report(checks: list[BoundCheck], path, extra: dict | None = None) -> None:
    payload = {**(extra or {}), "checks": [c.to_dict() for c in checks]}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
