"""Bellman backups for nominal, rectangular-robust, parametric-robust and
time-constrained (TC) robust problems.

Value fields are plain arrays: state-only fields have shape ``(S,)`` and
augmented fields (state x current parameter) have shape ``(S, |grid|)``.
Every backup is a pure Jacobi-style map: it reads its input field and returns a
fresh one.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .games import solve_matrix_games
from .model import ContractViolation, ParametricMDP, StepBall, neighbor_table
from .policies import ObsClass, PolicyTable, check_rows


class BackupMode(str, Enum):
    PURE = "pure"  # agent restricted to deterministic actions
    MIXED = "mixed"  # exact max-min over mixed agent strategies


def _game_values(payoffs: np.ndarray, mode: BackupMode) -> np.ndarray:
    """Row-player value of every game in a ``(..., A, C)`` stack."""
    mode = BackupMode(mode)
    lead = payoffs.shape[:-2]
    if mode is BackupMode.PURE:
        return payoffs.min(axis=-1).max(axis=-1)
    flat = payoffs.reshape((-1,) + payoffs.shape[-2:])
    values, _, _ = solve_matrix_games(flat)
    return values.reshape(lead)


def expected_next(mdp: ParametricMDP, v: np.ndarray) -> np.ndarray:
    """``E[v(s') | s, a]`` under every grid kernel, shape ``(|grid|, S, A)``.

    ``v`` is either state-only ``(S,)`` or augmented ``(S, |grid|)``; for the
    augmented case the successor is read at the same parameter that generated it.
    """
    if v.ndim == 1:
        return mdp.kernels @ v
    return np.einsum("psaz,zp->psa", mdp.kernels, v)


def standard_backup(v: np.ndarray, mdp: ParametricMDP, psi: int) -> np.ndarray:
    q = mdp.reward + mdp.gamma * (mdp.kernels[psi] @ v)
    return q.max(axis=1)


def param_payoffs(v: np.ndarray, mdp: ParametricMDP) -> np.ndarray:
    """Per-state one-step payoff ``M[s, a, psi]``."""
    ev = expected_next(mdp, v)
    return mdp.reward[:, :, None] + mdp.gamma * np.transpose(ev, (1, 2, 0))


def rect_robust_backup(v: np.ndarray, mdp: ParametricMDP) -> np.ndarray:
    # The adversary picks psi independently per (s, a), so a pure agent action attains the max.
    return param_payoffs(v, mdp).min(axis=2).max(axis=1)


def param_robust_backup(v: np.ndarray, mdp: ParametricMDP, mode: BackupMode = BackupMode.MIXED) -> np.ndarray:
    return _game_values(param_payoffs(v, mdp), mode)


def tc_payoffs(v: np.ndarray, mdp: ParametricMDP, ball: StepBall, nbr: np.ndarray | None = None) -> np.ndarray:
    """One-step payoff ``Q[s, psi, a, b]`` of agent action ``a`` and displacement ``b``."""
    if v.shape != (mdp.n_states, mdp.grid.size):
        raise ContractViolation(f"augmented field must have shape {(mdp.n_states, mdp.grid.size)}")
    if nbr is None:
        nbr = neighbor_table(mdp.grid, ball)
    ev = expected_next(mdp, v)  # (p', s, a)
    moved = ev[nbr]  # (psi, b, s, a)
    return mdp.reward[:, None, :, None] + mdp.gamma * np.transpose(moved, (2, 0, 3, 1))


def tc_backup_optimal(
    v: np.ndarray, mdp: ParametricMDP, ball: StepBall, mode: BackupMode = BackupMode.MIXED
) -> np.ndarray:
    return _game_values(tc_payoffs(v, mdp, ball), mode)


def tc_backup_policy(v: np.ndarray, pi: PolicyTable, mdp: ParametricMDP, ball: StepBall) -> np.ndarray:
    """Adversary best-responds to the agent's mixed commitment (minimum of the expectation)."""
    if pi.obs_class is not ObsClass.ORACLE:
        raise ContractViolation("tc_backup_policy expects an oracle-class policy")
    if pi.probs.shape != (mdp.n_states, mdp.grid.size, mdp.n_actions):
        raise ContractViolation("policy table shape does not match the model")
    check_rows(pi.probs)
    q = tc_payoffs(v, mdp, ball)
    return np.einsum("spa,spab->spb", pi.probs, q).min(axis=2)


def to_csv(v: np.ndarray, path) -> None:
    """Rows are states; columns are grid indices (a single column for state-only fields)."""
    v = np.atleast_2d(np.asarray(v, dtype=float).T).T
    with open(path, "w") as fh:
        fh.write("s," + ",".join(f"psi{p}" for p in range(v.shape[1])) + "\n")
        for s, row in enumerate(v):
            fh.write(f"{s}," + ",".join(repr(float(x)) for x in row) + "\n")
