"""Mixed policy tables keyed by observation class.

Table layouts (last axis is always the distribution):

* ``oracle``    ``(S, |grid|, A)``        agent sees the state and the current parameter
* ``stacked``   ``(S, S*A + 1, A)``       agent sees the state and the previous (state, action);
                                          key ``S*A`` is the episode-start sentinel
* ``vanilla``   ``(S, A)``                agent sees the state only
* ``adversary`` ``(S, K, |grid|, A, |B|)`` displacement choice after observing the realized
                                          action; ``K`` is 1, or ``S*A + 1`` against a stacked agent
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import ContractViolation

ROW_TOL = 1e-9


class ObsClass(str, Enum):
    ORACLE = "oracle"
    STACKED = "stacked"
    VANILLA = "vanilla"
    ADVERSARY = "adversary"


def start_key(n_states: int, n_actions: int) -> int:
    return n_states * n_actions


def stacked_key(s_prev: int, a_prev: int, n_actions: int) -> int:
    return s_prev * n_actions + a_prev


@dataclass(eq=False)
class PolicyTable:
    obs_class: ObsClass
    probs: np.ndarray

    def __post_init__(self) -> None:
        self.obs_class = ObsClass(self.obs_class)
        self.probs = np.asarray(self.probs, dtype=float)
        expected_ndim = {ObsClass.ORACLE: 3, ObsClass.STACKED: 3, ObsClass.VANILLA: 2, ObsClass.ADVERSARY: 5}
        if self.probs.ndim != expected_ndim[self.obs_class]:
            raise ContractViolation(f"{self.obs_class.value} table must have {expected_ndim[self.obs_class]} axes")
        check_rows(self.probs)

    @property
    def n_choices(self) -> int:
        return self.probs.shape[-1]

    @property
    def is_deterministic(self) -> bool:
        return bool(np.all(np.isclose(self.probs.max(axis=-1), 1.0, atol=ROW_TOL)))

    def joint(self, n_keys: int, n_psi: int) -> np.ndarray:
        """Agent distribution broadcast to the joint state ``(S, K, |grid|, A)``."""
        p = self.probs
        S, A = p.shape[0], p.shape[-1]
        if self.obs_class is ObsClass.ORACLE:
            out = p[:, None, :, :]
        elif self.obs_class is ObsClass.STACKED:
            if p.shape[1] != n_keys:
                raise ContractViolation("stacked policy needs the joint state to carry predecessor keys")
            out = p[:, :, None, :]
        elif self.obs_class is ObsClass.VANILLA:
            out = p[:, None, None, :]
        else:
            raise ContractViolation("an adversary table is not an agent policy")
        return np.broadcast_to(out, (S, n_keys, n_psi, A))

    def act_probs(self, s: int, psi_index: int, key: int) -> np.ndarray:
        if self.obs_class is ObsClass.ORACLE:
            return self.probs[s, psi_index]
        if self.obs_class is ObsClass.STACKED:
            return self.probs[s, key]
        if self.obs_class is ObsClass.VANILLA:
            return self.probs[s]
        raise ContractViolation("an adversary table is not an agent policy")

    def to_csv(self, path) -> None:
        key_names = {
            ObsClass.ORACLE: ["s", "psi"],
            ObsClass.STACKED: ["s", "prev_key"],
            ObsClass.VANILLA: ["s"],
            ObsClass.ADVERSARY: ["s", "prev_key", "psi", "a"],
        }[self.obs_class]
        prefix = "b" if self.obs_class is ObsClass.ADVERSARY else "a"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(key_names + [f"p_{prefix}{i}" for i in range(self.n_choices)])
            for key in np.ndindex(self.probs.shape[:-1]):
                w.writerow(list(key) + [repr(float(x)) for x in self.probs[key]])


def check_rows(probs: np.ndarray) -> None:
    if probs.size == 0:
        return
    if np.any(probs < -ROW_TOL) or np.any(np.abs(probs.sum(axis=-1) - 1.0) > ROW_TOL):
        raise ContractViolation("policy rows must be distributions (sum 1 within 1e-9, no negatives)")


def deterministic(obs_class: ObsClass | str, choices: np.ndarray, n_choices: int) -> PolicyTable:
    choices = np.asarray(choices, dtype=int)
    probs = np.zeros(choices.shape + (n_choices,))
    np.put_along_axis(probs, choices[..., None], 1.0, axis=-1)
    return PolicyTable(ObsClass(obs_class), probs)


def uniform(obs_class: ObsClass | str, n_states: int, n_actions: int, n_psi: int = 1) -> PolicyTable:
    obs_class = ObsClass(obs_class)
    shape = {
        ObsClass.ORACLE: (n_states, n_psi, n_actions),
        ObsClass.STACKED: (n_states, start_key(n_states, n_actions) + 1, n_actions),
        ObsClass.VANILLA: (n_states, n_actions),
    }[obs_class]
    return PolicyTable(obs_class, np.full(shape, 1.0 / n_actions))


def lift(policy: PolicyTable, to: ObsClass | str, n_psi: int) -> PolicyTable:
    """Re-express a vanilla policy in a richer observation class (same behaviour)."""
    to = ObsClass(to)
    if policy.obs_class is to:
        return policy
    if policy.obs_class is not ObsClass.VANILLA:
        raise ContractViolation(f"cannot lift a {policy.obs_class.value} policy to {to.value}")
    p = policy.probs
    S, A = p.shape
    if to is ObsClass.ORACLE:
        return PolicyTable(to, np.repeat(p[:, None, :], n_psi, axis=1))
    if to is ObsClass.STACKED:
        return PolicyTable(to, np.repeat(p[:, None, :], start_key(S, A) + 1, axis=1))
    raise ContractViolation(f"cannot lift to {to.value}")
