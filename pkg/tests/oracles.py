"""Independent reference implementations used only by the tests.

Everything here is written with explicit loops or scipy's LP solver and shares
no code with the package beyond the model container.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog


def lp_game_value(M: np.ndarray) -> float:
    """Row player's maximin value via an LP: max v s.t. x^T M >= v, x in simplex."""
    M = np.asarray(M, dtype=float)
    m, n = M.shape
    c = np.zeros(m + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-M.T, np.ones((n, 1))])
    A_eq = np.hstack([np.ones((1, m)), np.zeros((1, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(n), A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, None)] * m + [(None, None)], method="highs")
    assert res.status == 0
    return float(res.x[-1])


def support_enumeration_2xn(M: np.ndarray) -> float:
    """Exact value of a 2 x n game: maximize the lower envelope over x = (p, 1 - p)."""
    M = np.asarray(M, dtype=float)
    assert M.shape[0] == 2
    cands = {0.0, 1.0}
    n = M.shape[1]
    for j, k in itertools.combinations(range(n), 2):
        # p M0j + (1-p) M1j = p M0k + (1-p) M1k
        den = (M[0, j] - M[1, j]) - (M[0, k] - M[1, k])
        if abs(den) > 1e-15:
            p = (M[1, k] - M[1, j]) / den
            if 0.0 <= p <= 1.0:
                cands.add(p)
    return max(min(p * M[0, j] + (1 - p) * M[1, j] for j in range(n)) for p in cands)


def clamp_move(grid, p: int, b) -> int:
    idx = np.clip(np.array(grid.multi_index(p)) + np.asarray(b), 0, grid.segments_per_dim - 1)
    return int(np.ravel_multi_index(tuple(idx), grid.shape))


def moves(k: int, d: int) -> list[tuple[int, ...]]:
    return list(itertools.product(range(-k, k + 1), repeat=d))


def tc_payoff_loops(v, mdp, k):
    S, P, A = mdp.n_states, mdp.grid.size, mdp.n_actions
    B = moves(k, mdp.grid.dims)
    Q = np.zeros((S, P, A, len(B)))
    for s in range(S):
        for p in range(P):
            for a in range(A):
                for j, b in enumerate(B):
                    q = clamp_move(mdp.grid, p, b)
                    Q[s, p, a, j] = mdp.reward[s, a] + mdp.gamma * sum(
                        mdp.kernels[q, s, a, z] * v[z, q] for z in range(S)
                    )
    return Q


def tc_backup_loops(v, mdp, k, mixed: bool):
    Q = tc_payoff_loops(v, mdp, k)
    S, P = Q.shape[:2]
    out = np.zeros((S, P))
    for s in range(S):
        for p in range(P):
            out[s, p] = lp_game_value(Q[s, p]) if mixed else Q[s, p].min(axis=1).max()
    return out


def param_backup_loops(v, mdp, mixed: bool):
    S, P, A = mdp.n_states, mdp.grid.size, mdp.n_actions
    out = np.zeros(S)
    for s in range(S):
        M = np.array([[mdp.reward[s, a] + mdp.gamma * mdp.kernels[p, s, a] @ v for p in range(P)] for a in range(A)])
        out[s] = lp_game_value(M) if mixed else M.min(axis=1).max()
    return out


def rect_backup_loops(v, mdp):
    S, P, A = mdp.n_states, mdp.grid.size, mdp.n_actions
    return np.array([
        max(min(mdp.reward[s, a] + mdp.gamma * mdp.kernels[p, s, a] @ v for p in range(P)) for a in range(A))
        for s in range(S)
    ])


def tc_backward_induction(mdp, k, horizon: int, mixed: bool):
    """H-step game value from v_0 = 0; differs from the fixed point by at most gamma^H / (1 - gamma)."""
    v = np.zeros((mdp.n_states, mdp.grid.size))
    for _ in range(horizon):
        v = tc_backup_loops(v, mdp, k, mixed)
    return v


def policy_evaluation(P_pi: np.ndarray, r_pi: np.ndarray, gamma: float) -> np.ndarray:
    return np.linalg.solve(np.eye(len(r_pi)) - gamma * P_pi, r_pi)


def occupancy_series(P_pi: np.ndarray, rho: np.ndarray, gamma: float, terms: int = 500) -> np.ndarray:
    d, dist = np.zeros_like(rho), rho.copy()
    for k in range(terms):
        d += gamma**k * dist
        dist = dist @ P_pi
    return (1 - gamma) * d


def enumerate_paths(start: int, k: int, G: int, t: int) -> list[tuple[int, ...]]:
    """Every clamped 1-d grid path of t moves from ``start``, built recursively."""
    if t == 0:
        return [(start,)]
    out = []
    for path in enumerate_paths(start, k, G, t - 1):
        for b in range(-k, k + 1):
            out.append(path + (min(max(path[-1] + b, 0), G - 1),))
    return out
