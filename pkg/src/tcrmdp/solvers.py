"""Value-iteration drivers, policy extraction, adversary best response and
alternating best-response training for partially observed agents."""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import operators as ops
from .games import solve_matrix_games
from .model import ContractViolation, ParametricMDP, StepBall, neighbor_table
from .operators import BackupMode
from .policies import (
    ObsClass,
    PolicyTable,
    deterministic,
    lift,
    stacked_key,
    start_key,
    uniform,
)


class NonConvergenceError(RuntimeError):
    def __init__(self, message: str, best: np.ndarray, report: "SolveReport"):
        super().__init__(message)
        self.best = best
        self.report = report


@dataclass
class SolveReport:
    iterations: int
    final_residual: float
    wall_time: float
    mode: str | None = None
    residuals: list[float] = field(default_factory=list)

    def to_dict(self, include_time: bool = True) -> dict:
        d = asdict(self)
        if not include_time:
            d.pop("wall_time")
        return d


def iteration_bound(gamma: float, epsilon: float, first_residual: float) -> int:
    """Iterations sufficient for a gamma-contraction to reach residual ``epsilon``."""
    if first_residual <= epsilon or gamma == 0.0:
        return 1
    return math.ceil(math.log(epsilon * (1 - gamma) / first_residual) / math.log(gamma)) + 1


def value_iteration(
    operator: Callable[[np.ndarray], np.ndarray],
    v0: np.ndarray,
    epsilon: float = 1e-8,
    max_iters: int = 100_000,
    mode: BackupMode | str | None = None,
) -> tuple[np.ndarray, SolveReport]:
    """Iterate ``v <- T v`` until ``||T v - v||_inf <= epsilon``.

    The returned field ``v`` satisfies the residual condition with ``T v``
    already computed, i.e. the last successive difference is at most epsilon.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    t0 = time.perf_counter()
    v = np.array(v0, dtype=float)
    residuals = []
    mode_name = None if mode is None else BackupMode(mode).value
    for it in range(1, max_iters + 1):
        tv = operator(v)
        res = float(np.max(np.abs(tv - v))) if v.size else 0.0
        residuals.append(res)
        if res <= epsilon:
            return v, SolveReport(it, res, time.perf_counter() - t0, mode_name, residuals)
        v = tv
    report = SolveReport(max_iters, residuals[-1], time.perf_counter() - t0, mode_name, residuals)
    raise NonConvergenceError(f"no convergence to {epsilon} within {max_iters} iterations", v, report)


def solve_nominal(mdp: ParametricMDP, psi: int, epsilon: float = 1e-10, max_iters: int = 100_000):
    return value_iteration(lambda v: ops.standard_backup(v, mdp, psi), np.zeros(mdp.n_states), epsilon, max_iters)


def solve_rect(mdp: ParametricMDP, epsilon: float = 1e-10, max_iters: int = 100_000):
    return value_iteration(lambda v: ops.rect_robust_backup(v, mdp), np.zeros(mdp.n_states), epsilon, max_iters)


def solve_param(
    mdp: ParametricMDP, mode: BackupMode = BackupMode.MIXED, epsilon: float = 1e-10, max_iters: int = 100_000
):
    return value_iteration(
        lambda v: ops.param_robust_backup(v, mdp, mode), np.zeros(mdp.n_states), epsilon, max_iters, mode
    )


def solve_tc(
    mdp: ParametricMDP,
    ball: StepBall,
    mode: BackupMode = BackupMode.MIXED,
    epsilon: float = 1e-10,
    max_iters: int = 100_000,
):
    nbr = neighbor_table(mdp.grid, ball)
    mode = BackupMode(mode)

    def backup(v):
        return ops._game_values(ops.tc_payoffs(v, mdp, ball, nbr), mode)

    v0 = np.zeros((mdp.n_states, mdp.grid.size))
    return value_iteration(backup, v0, epsilon, max_iters, mode)


def evaluate_tc_policy(
    pi: PolicyTable, mdp: ParametricMDP, ball: StepBall, epsilon: float = 1e-10, max_iters: int = 100_000
):
    """Fixed point of the policy operator (adversary sees the mixed commitment)."""
    v0 = np.zeros((mdp.n_states, mdp.grid.size))
    return value_iteration(lambda v: ops.tc_backup_policy(v, pi, mdp, ball), v0, epsilon, max_iters)


def greedy_policy(q: np.ndarray, obs_class: ObsClass | str) -> PolicyTable:
    return deterministic(obs_class, np.argmax(q, axis=-1), q.shape[-1])


def extract_oracle_policy(
    v_star: np.ndarray, mdp: ParametricMDP, ball: StepBall, mode: BackupMode = BackupMode.MIXED
) -> tuple[PolicyTable, PolicyTable]:
    """Maximin agent rows and a minimizing displacement at every (s, psi).

    The adversary table answers the agent's commitment, so its choice does not
    depend on the realized action.
    """
    mode = BackupMode(mode)
    S, P, A = mdp.n_states, mdp.grid.size, mdp.n_actions
    q = ops.tc_payoffs(v_star, mdp, ball)  # (S, P, A, B)
    if mode is BackupMode.PURE:
        x = np.zeros((S, P, A))
        np.put_along_axis(x, np.argmax(q.min(axis=3), axis=2)[..., None], 1.0, axis=2)
    else:
        _, X, _ = solve_matrix_games(q.reshape(S * P, A, -1))
        x = X.reshape(S, P, A)
        x = x / x.sum(axis=2, keepdims=True)
    agent = PolicyTable(ObsClass.ORACLE, x)
    b = np.argmin(np.einsum("spa,spab->spb", x, q), axis=2)
    nB = q.shape[3]
    choice = np.broadcast_to(b[:, None, :, None], (S, 1, P, A))
    return agent, deterministic(ObsClass.ADVERSARY, choice, nB)


def _n_keys(agent: PolicyTable, mdp: ParametricMDP) -> int:
    return start_key(mdp.n_states, mdp.n_actions) + 1 if agent.obs_class is ObsClass.STACKED else 1


def _successor_values(mdp: ParametricMDP, W: np.ndarray) -> np.ndarray:
    """``E[W(x') | s, a]`` at every successor parameter, shape ``(|grid|, S, A)``."""
    S, A = mdp.n_states, mdp.n_actions
    if W.shape[1] == 1:
        return np.einsum("psaz,zp->psa", mdp.kernels, W[:, 0, :])
    Wk = W[:, : S * A, :].reshape(S, S, A, -1)  # (s', s, a, p)
    return np.einsum("psaz,zsap->psa", mdp.kernels, Wk)


def _action_displacement_q(mdp: ParametricMDP, W: np.ndarray, nbr: np.ndarray) -> np.ndarray:
    """``Q[s, psi, a, b]`` against a joint-state value ``W[s, key, psi]``."""
    ev = _successor_values(mdp, W)[nbr]  # (psi, b, s, a)
    return mdp.reward[:, None, :, None] + mdp.gamma * np.transpose(ev, (2, 0, 3, 1))


def adversary_best_response(
    agent: PolicyTable,
    mdp: ParametricMDP,
    ball: StepBall,
    epsilon: float = 1e-10,
    max_iters: int = 100_000,
) -> tuple[PolicyTable, np.ndarray, SolveReport]:
    """Minimizing adversary against a fixed agent; it observes the realized action.

    Returns the deterministic adversary table, the agent's worst value
    ``W[s, key, psi]`` (``key`` axis has length 1 unless the agent is stacked)
    and the solve report.
    """
    S, P, A = mdp.n_states, mdp.grid.size, mdp.n_actions
    K = _n_keys(agent, mdp)
    expected = {
        ObsClass.ORACLE: (S, P, A),
        ObsClass.STACKED: (S, K, A),
        ObsClass.VANILLA: (S, A),
    }.get(agent.obs_class)
    if expected is None or agent.probs.shape != expected:
        raise ContractViolation(f"agent table {agent.probs.shape} does not fit the model")
    pi = agent.joint(K, P)
    nbr = neighbor_table(mdp.grid, ball)

    def backup(W):
        qmin = _action_displacement_q(mdp, W, nbr).min(axis=3)  # (S, P, A)
        return np.einsum("skpa,spa->skp", pi, qmin)

    W, report = value_iteration(backup, np.zeros((S, K, P)), epsilon, max_iters)
    q = _action_displacement_q(mdp, W, nbr)
    choice = np.broadcast_to(np.argmin(q, axis=3)[:, None], (S, K, P, A))
    return deterministic(ObsClass.ADVERSARY, choice, q.shape[3]), W, report


def worst_by_start(W: np.ndarray, agent: PolicyTable, mdp: ParametricMDP) -> np.ndarray:
    """Per start state, the worst value over initial parameters."""
    k = start_key(mdp.n_states, mdp.n_actions) if agent.obs_class is ObsClass.STACKED else 0
    return W[:, k, :].min(axis=1)


def joint_occupancy(
    agent: PolicyTable, adversary: PolicyTable, mdp: ParametricMDP, ball: StepBall
) -> np.ndarray:
    """Normalized discounted occupancy ``mu[s, key, psi]`` of the joint process.

    Initial distribution: uniform state, start key, uniform initial parameter.
    """
    S, P, A = mdp.n_states, mdp.grid.size, mdp.n_actions
    K = _n_keys(agent, mdp)
    N = S * K * P
    pi = agent.joint(K, P)
    nbr = neighbor_table(mdp.grid, ball)
    b = np.argmax(adversary.probs, axis=-1)  # (S, K, P, A)
    s_idx, k_idx, p_idx, a_idx = np.indices((S, K, P, A))
    p_next = nbr[p_idx, b]
    k_next = s_idx * A + a_idx if K > 1 else np.zeros_like(s_idx)
    w = pi[s_idx, k_idx, p_idx, a_idx]
    rows_src = (s_idx * K + k_idx) * P + p_idx
    trans = mdp.kernels[p_next, s_idx, a_idx]  # (S, K, P, A, S')
    src = np.broadcast_to(rows_src[..., None], trans.shape)
    dst = (np.arange(S)[None, None, None, None, :] * K + k_next[..., None]) * P + p_next[..., None]
    weight = w[..., None] * trans
    keep = weight > 0
    T = sp.csr_matrix((weight[keep], (src[keep], dst[keep])), shape=(N, N))
    rho = np.zeros((S, K, P))
    rho[:, K - 1 if K > 1 else 0, :] = 1.0 / (S * P)
    lhs = sp.identity(N, format="csc") - mdp.gamma * T.T.tocsc()
    mu = spla.spsolve(lhs, (1 - mdp.gamma) * rho.reshape(-1))
    return np.maximum(np.asarray(mu).reshape(S, K, P), 0.0)


def improve_agent(
    agent: PolicyTable, adversary: PolicyTable, W: np.ndarray, mdp: ParametricMDP, ball: StepBall
) -> PolicyTable:
    """Greedy deterministic rows w.r.t. occupancy-weighted Q over the hidden parameter."""
    nbr = neighbor_table(mdp.grid, ball)
    q = _action_displacement_q(mdp, W, nbr)
    b = np.argmax(adversary.probs, axis=-1)[:, 0]  # (S, P, A); identical across keys
    q_adv = np.take_along_axis(q, b[..., None], axis=3)[..., 0]  # (S, P, A)
    mu = joint_occupancy(agent, adversary, mdp, ball)  # (S, K, P)
    if agent.obs_class is ObsClass.VANILLA:
        weights = mu.sum(axis=1)  # (S, P)
        mass = weights.sum(axis=1, keepdims=True)
        weights = np.where(mass > 0, weights, 1.0)
        score = np.einsum("sp,spa->sa", weights, q_adv)
        return greedy_policy(score, ObsClass.VANILLA)
    if agent.obs_class is ObsClass.STACKED:
        mass = mu.sum(axis=2, keepdims=True)  # (S, K, 1)
        weights = np.where(mass > 0, mu, 1.0)
        score = np.einsum("skp,spa->ska", weights, q_adv)
        return greedy_policy(score, ObsClass.STACKED)
    raise ContractViolation(f"no hidden-parameter improvement for {agent.obs_class.value}")


@dataclass
class TrainRound:
    round: int
    worst_value: float
    per_start: list[float]
    accepted: bool
    best_worst_value: float


def alternating_train(
    obs_class: ObsClass | str,
    rounds: int,
    mdp: ParametricMDP,
    ball: StepBall,
    epsilon: float = 1e-10,
    init: PolicyTable | None = None,
    dominate: bool | None = None,
) -> tuple[PolicyTable, list[TrainRound]]:
    """Alternate adversary best response and agent improvement for ``rounds`` rounds.

    The best agent so far is kept: a candidate replaces it only if its worst
    value (minimum over start states of the worst over initial parameters) does
    not decrease; with ``dominate`` the per-start-state values must not decrease
    either.  Stacked training starts from the lifted vanilla result by default
    and uses ``dominate``, so it never ends below the vanilla agent.

    The oracle class observes the whole joint state; each round then solves the
    realized-action game exactly.
    """
    obs_class = ObsClass(obs_class)
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    trace: list[TrainRound] = []
    if obs_class is ObsClass.ORACLE:
        v, _ = solve_tc(mdp, ball, BackupMode.PURE, epsilon)
        agent, _ = extract_oracle_policy(v, mdp, ball, BackupMode.PURE)
        _, W, _ = adversary_best_response(agent, mdp, ball, epsilon)
        per = worst_by_start(W, agent, mdp)
        for r in range(1, rounds + 1):
            trace.append(TrainRound(r, float(per.min()), per.tolist(), r == 1, float(per.min())))
        return agent, trace
    if obs_class not in (ObsClass.VANILLA, ObsClass.STACKED):
        raise ContractViolation(f"cannot train a {obs_class.value} agent")

    if obs_class is ObsClass.STACKED and init is None:
        vanilla, _ = alternating_train(ObsClass.VANILLA, rounds, mdp, ball, epsilon)
        init = lift(vanilla, ObsClass.STACKED, mdp.grid.size)
        dominate = True if dominate is None else dominate
    dominate = bool(dominate)

    best, best_per = None, None
    if init is not None:
        current = lift(init, obs_class, mdp.grid.size)
        adv, W, _ = adversary_best_response(current, mdp, ball, epsilon)
        best, best_per = current, worst_by_start(W, current, mdp)
    else:
        current = uniform(obs_class, mdp.n_states, mdp.n_actions)
        adv, W, _ = adversary_best_response(current, mdp, ball, epsilon)

    for r in range(1, rounds + 1):
        current = improve_agent(current, adv, W, mdp, ball)
        adv, W, _ = adversary_best_response(current, mdp, ball, epsilon)
        per = worst_by_start(W, current, mdp)
        accept = best is None or per.min() >= best_per.min() - 1e-12
        if accept and dominate and best is not None:
            accept = bool(np.all(per >= best_per - 1e-12))
        if accept:
            best, best_per = current, per
        trace.append(TrainRound(r, float(per.min()), per.tolist(), bool(accept), float(best_per.min())))
    return best, trace


def exhaustive_adversary_oracle(
    agent: PolicyTable, mdp: ParametricMDP, ball: StepBall, horizon: int
) -> np.ndarray:
    """Worst H-step discounted return over all open-loop displacement sequences.

    Requires point-mass kernels and a deterministic agent.  Returns an array
    ``(S, |grid|)`` indexed by start state and initial parameter.
    """
    if not np.all(np.isclose(mdp.kernels.max(axis=-1), 1.0, atol=1e-12)):
        raise ContractViolation("exhaustive oracle requires deterministic kernels")
    if not agent.is_deterministic:
        raise ContractViolation("exhaustive oracle requires a deterministic agent")
    S, P, A = mdp.n_states, mdp.grid.size, mdp.n_actions
    if horizon == 0:
        return np.zeros((S, P))
    moves = ball.displacements(mdp.grid.dims)
    n_seq = len(moves) ** horizon
    if n_seq > 10**7:
        raise ContractViolation(f"{n_seq} sequences exceed the enumeration budget")
    nxt = np.argmax(mdp.kernels, axis=-1)  # (P, S, A)
    acts = np.argmax(agent.probs, axis=-1)
    seqs = np.array(list(itertools.product(range(len(moves)), repeat=horizon)), dtype=int)
    out = np.empty((S, P))
    G = mdp.grid.segments_per_dim
    for s0 in range(S):
        for p0 in range(P):
            s = np.full(n_seq, s0)
            pm = np.tile(np.array(mdp.grid.multi_index(p0)), (n_seq, 1))
            p = np.full(n_seq, p0)
            key = np.full(n_seq, start_key(S, A))
            ret = np.zeros(n_seq)
            for t in range(horizon):
                if agent.obs_class is ObsClass.ORACLE:
                    a = acts[s, p]
                elif agent.obs_class is ObsClass.STACKED:
                    a = acts[s, key]
                else:
                    a = acts[s]
                ret += mdp.gamma**t * mdp.reward[s, a]
                pm = np.clip(pm + moves[seqs[:, t]], 0, G - 1)
                p = np.ravel_multi_index(tuple(pm.T), mdp.grid.shape)
                key = stacked_key(s, a, A)
                s = nxt[p, s, a]
            out[s0, p0] = ret.min()
    return out
