"""Randomized property sweeps shared by the CLI ``check`` command and the tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import operators as ops
from .envs import RandomInstanceConfig, random_instance
from .model import ParametricMDP, StepBall
from .operators import BackupMode
from .policies import ObsClass, PolicyTable
from .schedules import KINDS, Schedule
from .theory import (
    MDPSequence,
    StationaryMDP,
    TheoryChainFamily,
    lipschitz_bound_check,
    policy_value,
    return_via_occupancy,
    sequence_from_schedule,
)

CONTRACTION_SLACK = 1e-9


@dataclass
class ContractionRecord:
    instance: int
    operator: str
    mode: str
    worst_excess: float  # max over pairs of ||Tv1 - Tv2|| - gamma ||v1 - v2||
    worst_shift_error: float
    passed: bool


def random_case(rng: np.random.Generator) -> tuple[ParametricMDP, StepBall]:
    dims = int(rng.integers(1, 3))
    seg = int(rng.integers(2, 6))
    cfg = RandomInstanceConfig(
        n_states=int(rng.integers(1, 11)),
        n_actions=int(rng.integers(1, 5)),
        dims=dims,
        segments_per_dim=seg,
        gamma=float(rng.uniform(0.5, 0.99)),
        deterministic=bool(rng.random() < 0.2),
    )
    return random_instance(rng, cfg), StepBall(int(rng.integers(0, 3)))


def operator_bank(mdp: ParametricMDP, ball: StepBall, rng: np.random.Generator):
    """``(name, mode, augmented, T)`` for every backup family and mode."""
    S, P, A = mdp.n_states, mdp.grid.size, mdp.n_actions
    psi = int(rng.integers(P))
    pi = PolicyTable(ObsClass.ORACLE, rng.dirichlet(np.ones(A), size=(S, P)))
    bank = [
        ("standard", "pure", False, lambda v: ops.standard_backup(v, mdp, psi)),
        ("rect", "pure", False, lambda v: ops.rect_robust_backup(v, mdp)),
        ("tc_policy", "mixed", True, lambda v: ops.tc_backup_policy(v, pi, mdp, ball)),
    ]
    for mode in (BackupMode.PURE, BackupMode.MIXED):
        bank.append(("param", mode.value, False, lambda v, m=mode: ops.param_robust_backup(v, mdp, m)))
        bank.append(("tc_optimal", mode.value, True, lambda v, m=mode: ops.tc_backup_optimal(v, mdp, ball, m)))
    return bank


def contraction_sweep(seed: int, instances: int, pairs: int) -> list[ContractionRecord]:
    rng = np.random.default_rng(seed)
    out = []
    for i in range(instances):
        mdp, ball = random_case(rng)
        shape_a = (mdp.n_states, mdp.grid.size)
        scale = 1.0 / (1.0 - mdp.gamma)
        for name, mode, augmented, T in operator_bank(mdp, ball, rng):
            shape = shape_a if augmented else (mdp.n_states,)
            excess, shift_err = -np.inf, 0.0
            for _ in range(pairs):
                v1 = rng.uniform(-scale, scale, size=shape)
                v2 = rng.uniform(-scale, scale, size=shape)
                t1, t2 = T(v1), T(v2)
                gap = float(np.max(np.abs(t1 - t2)))
                excess = max(excess, gap - mdp.gamma * float(np.max(np.abs(v1 - v2))))
                c = float(rng.uniform(-1, 1))
                shift_err = max(shift_err, float(np.max(np.abs(T(v1 + c) - (t1 + mdp.gamma * c)))))
            ok = excess <= CONTRACTION_SLACK and shift_err <= 1e-9
            out.append(ContractionRecord(i, name, mode, float(excess), shift_err, ok))
    return out


@dataclass
class SequenceRecord:
    index: int
    kind: str
    L_P: float
    L_r: float
    worst_pair_gap: float
    pair_bound: float
    worst_margin: float
    occupancy_error: float
    passed: bool


def drift_bound_sweep(seed: int, sequences: int, length: int, radius: float = 0.1) -> list[SequenceRecord]:
    rng = np.random.default_rng(seed)
    fam = TheoryChainFamily(
        n_states=5, low=0.1, high=0.9, slope=0.5, gamma=0.9
    )
    out = []
    for i in range(sequences):
        kind = KINDS[i % len(KINDS)]
        seq = sequence_from_schedule(fam, Schedule(kind, radius=radius, horizon=length), rng)
        pi = rng.dirichlet(np.ones(2), size=fam.n_states)
        start = rng.dirichlet(np.ones(fam.n_states))
        margins, gaps, bound = [], [], 0.0
        for _ in range(4):
            t0 = int(rng.integers(0, length))
            t = int(rng.integers(0, length - t0 + 1))
            chk = lipschitz_bound_check(pi, seq, t0, t, start)
            margins.append(chk.margin)
            gaps.extend(chk.pair_gaps)
            bound = chk.pair_bound
        full = lipschitz_bound_check(pi, seq, 0, length, start)
        gaps.extend(full.pair_gaps)
        margins.append(full.margin)
        occ = max(
            abs(return_via_occupancy(pi, M, start) - float(start @ policy_value(pi, M))) for M in seq.mdps
        )
        ok = min(margins) >= -1e-9 and max(gaps, default=0.0) <= bound + 1e-9 and occ <= 1e-8
        out.append(
            SequenceRecord(i, kind, seq.L_P, seq.L_r, max(gaps, default=0.0), bound, min(margins), occ, ok)
        )
    return out


def drifted_copy(seq: MDPSequence, step: int = 0, bump: float = 0.05) -> MDPSequence:
    """Copy of ``seq`` whose reward jumps by ``L_r + bump`` at one (s, a) after ``step``."""
    mdps = list(seq.mdps)
    m = mdps[step + 1]
    reward = m.reward.copy()
    reward[0, 0] = min(1.0, mdps[step].reward[0, 0] + seq.L_r + bump)
    if abs(reward[0, 0] - mdps[step].reward[0, 0]) <= seq.L_r:
        reward[0, 0] = max(0.0, mdps[step].reward[0, 0] - seq.L_r - bump)
    mdps[step + 1] = StationaryMDP(m.kernel, reward, m.gamma)
    return MDPSequence(mdps, seq.L_P, seq.L_r, seq.psi)
