"""Exact solution of finite two-player zero-sum matrix games.

The row player maximizes, the column player minimizes.  Small games are solved
with a dense tableau simplex on the normalized game LP (Bland's rule, so the
pivot sequence is deterministic); each solution carries a duality-gap
certificate computed from the returned strategies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GAP_TOL = 1e-9


class GameSolveError(ArithmeticError):
    """The solver could not certify a duality gap within tolerance."""


@dataclass
class GameSolution:
    value: float
    row_strategy: np.ndarray
    col_strategy: np.ndarray
    gap: float

    @property
    def lower(self) -> float:
        return self.value - self.gap / 2

    @property
    def upper(self) -> float:
        return self.value + self.gap / 2


def certify(payoff: np.ndarray, x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Guaranteed (lower, upper) bounds on the game value from a strategy pair."""
    return float(np.min(x @ payoff)), float(np.max(payoff @ y))


def _simplex_game(payoff: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # max 1'w s.t. A w <= 1, w >= 0 with A > 0; the slack basis is feasible.
    m, n = payoff.shape
    shift = payoff.min() - 1.0
    A = payoff - shift
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n : n + m] = np.eye(m)
    T[:m, -1] = 1.0
    T[m, :n] = -1.0
    basis = list(range(n, n + m))
    tol = 1e-12
    obj = T[m]
    for _ in range(10_000):
        c = int(np.argmax(obj[:-1] < -tol))
        if obj[c] >= -tol:
            break
        col = T[:m, c]
        best_r, best_ratio = -1, np.inf
        for i in range(m):
            if col[i] > tol:
                ratio = T[i, -1] / col[i]
                if ratio < best_ratio - 1e-15 or (ratio <= best_ratio + 1e-15 and basis[i] < basis[best_r]):
                    best_r, best_ratio = i, ratio
        r = best_r
        T[r] /= T[r, c]
        pivot_row = T[r].copy()
        T -= np.outer(T[:, c], pivot_row)
        T[r] = pivot_row
        basis[r] = c
    else:  # pragma: no cover - Bland's rule terminates
        raise GameSolveError("simplex iteration limit reached")
    w = np.zeros(n + m)
    for i, b in enumerate(basis):
        w[b] = T[i, -1]
    w = np.maximum(w[:n], 0.0)
    u = np.maximum(T[m, n : n + m], 0.0)
    return u / u.sum(), w / w.sum()


def _linprog_game(payoff: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    from scipy.optimize import linprog

    m, n = payoff.shape
    shift = payoff.min() - 1.0
    A = payoff - shift
    res = linprog(
        -np.ones(n),
        A_ub=A,
        b_ub=np.ones(m),
        bounds=[(0, None)] * n,
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise GameSolveError(f"linprog failed: {res.message}")
    w = np.maximum(res.x, 0.0)
    u = np.maximum(-res.ineqlin.marginals, 0.0)
    return u / u.sum(), w / w.sum()


def _polish(payoff: np.ndarray, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Re-solve the equalizing system on the strategies' supports."""
    rows = np.nonzero(x > 1e-9)[0]
    cols = np.nonzero(y > 1e-9)[0]
    if rows.size != cols.size:
        return x, y
    sub = payoff[np.ix_(rows, cols)]
    k = rows.size
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = sub.T
    K[:k, k] = -1.0
    K[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    try:
        xs = np.linalg.solve(K, rhs)[:k]
        K[:k, :k] = sub
        ys = np.linalg.solve(K, rhs)[:k]
    except np.linalg.LinAlgError:
        return x, y
    if xs.min() < -1e-12 or ys.min() < -1e-12:
        return x, y
    x2 = np.zeros_like(x)
    y2 = np.zeros_like(y)
    x2[rows] = np.maximum(xs, 0.0)
    y2[cols] = np.maximum(ys, 0.0)
    return x2 / x2.sum(), y2 / y2.sum()


def solve_matrix_game(payoff: np.ndarray, tol: float = GAP_TOL) -> GameSolution:
    """Value and optimal mixed strategies of ``max_x min_y x' M y``."""
    M = np.asarray(payoff, dtype=float)
    if M.ndim != 2 or M.size == 0:
        raise ValueError(f"payoff must be a non-empty matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("payoff contains non-finite entries")
    m, n = M.shape
    row_mins = M.min(axis=1)
    col_maxs = M.max(axis=0)
    i, j = int(np.argmax(row_mins)), int(np.argmin(col_maxs))
    if row_mins[i] >= col_maxs[j]:
        x = np.zeros(m)
        y = np.zeros(n)
        x[i] = y[j] = 1.0
        return GameSolution(float(row_mins[i]), x, y, 0.0)

    best = None
    for method in (_simplex_game, _linprog_game):
        try:
            x, y = method(M)
        except GameSolveError:
            continue
        for cand in ((x, y), None):
            if cand is None:
                cand = _polish(M, x, y)
            lo, hi = certify(M, *cand)
            gap = max(hi - lo, 0.0)
            if best is None or gap < best.gap:
                best = GameSolution((lo + hi) / 2, cand[0], cand[1], gap)
            if best.gap <= tol:
                return best
    gap = best.gap if best is not None else float("inf")
    raise GameSolveError(f"could not certify duality gap <= {tol}; best gap {gap}")


def _simplex_batch(P: np.ndarray, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`_simplex_game` over a stack of equally shaped games."""
    G, m, n = P.shape
    shift = P.min(axis=(1, 2)) - 1.0
    T = np.zeros((G, m + 1, n + m + 1))
    T[:, :m, :n] = P - shift[:, None, None]
    T[:, :m, n : n + m] = np.eye(m)
    T[:, :m, -1] = 1.0
    T[:, m, :n] = -1.0
    basis = np.tile(np.arange(n, n + m), (G, 1))
    active = np.arange(G)
    for _ in range(10_000):
        obj = T[active, m, :-1]
        neg = obj < -tol
        go = neg.any(axis=1)
        active = active[go]
        if active.size == 0:
            break
        c = np.argmax(neg[go], axis=1)
        Ta = T[active]
        col = Ta[np.arange(active.size), :m, c]
        rhs = Ta[:, :m, -1]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(col > tol, rhs / col, np.inf)
        best = ratio.min(axis=1, keepdims=True)
        ties = ratio <= best + 1e-15 + 1e-12 * np.abs(best)
        key = np.where(ties, basis[active], np.iinfo(np.int64).max)
        r = np.argmin(key, axis=1)
        idx = np.arange(active.size)
        Ta[idx, r] /= Ta[idx, r, c][:, None]
        pivot_row = Ta[idx, r].copy()
        factors = Ta[idx, :, c]
        Ta -= factors[:, :, None] * pivot_row[:, None, :]
        Ta[idx, r] = pivot_row
        T[active] = Ta
        basis[active, r] = c
    else:  # pragma: no cover
        raise GameSolveError("simplex iteration limit reached")
    W = np.zeros((G, n + m))
    np.put_along_axis(W, basis, T[:, :m, -1], axis=1)
    W = np.maximum(W[:, :n], 0.0)
    U = np.maximum(T[:, m, n : n + m], 0.0)
    return U / U.sum(axis=1, keepdims=True), W / W.sum(axis=1, keepdims=True)


def solve_matrix_games(payoffs: np.ndarray, tol: float = GAP_TOL) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Solve a stack of games ``(G, m, n)``; returns values, row strategies and gaps.

    Games with a pure saddle point are resolved directly; the rest go through the
    batched simplex, and any game it cannot certify is retried on its own by
    :func:`solve_matrix_game`.
    """
    P = np.asarray(payoffs, dtype=float)
    G, m, n = P.shape
    values = np.empty(G)
    X = np.zeros((G, m))
    gaps = np.zeros(G)
    row_mins = P.min(axis=2)
    col_maxs = P.max(axis=1)
    i = np.argmax(row_mins, axis=1)
    lower = row_mins[np.arange(G), i]
    upper = col_maxs.min(axis=1)
    saddle = lower >= upper
    values[saddle] = lower[saddle]
    X[np.nonzero(saddle)[0], i[saddle]] = 1.0
    rest = np.nonzero(~saddle)[0]
    if rest.size:
        Xr, Yr = _simplex_batch(P[rest])
        lo = np.einsum("gm,gmn->gn", Xr, P[rest]).min(axis=1)
        hi = np.einsum("gmn,gn->gm", P[rest], Yr).max(axis=1)
        values[rest] = (lo + hi) / 2
        gaps[rest] = np.maximum(hi - lo, 0.0)
        X[rest] = Xr
        for g in rest[gaps[rest] > tol]:
            sol = solve_matrix_game(P[g], tol)
            values[g], X[g], gaps[g] = sol.value, sol.row_strategy, sol.gap
    return values, X, gaps


def pure_maximin(payoff: np.ndarray) -> tuple[float, int]:
    """Best guaranteed payoff when the row player must commit to a pure action."""
    mins = np.asarray(payoff).min(axis=1)
    i = int(np.argmax(mins))
    return float(mins[i]), i
