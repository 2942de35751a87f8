"""Exact and entropy-regularized optimal transport between histograms.

Histograms are 1-D float arrays on the probability simplex and cost
matrices are dense ``(n, n)`` arrays.  The exact solver is a transportation
simplex (MODI) specialized to the transport polytope; the regularized solver
is Sinkhorn scaling with an automatic log-domain mode.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, xlogy

from .errors import DimensionMismatch, InfeasibleNumerics, NonConvergence, NumericUnderflow

log = logging.getLogger(__name__)

# max entry of C/gamma above which Sinkhorn runs on log-scalings
LOG_DOMAIN_THRESHOLD = 200.0
MASS_TOL = 1e-12
EXACT_FEAS_TOL = 1e-9
SINKHORN_FEAS_TOL = 1e-6


def as_histogram(p, n: int | None = None) -> np.ndarray:
    """Validate and normalize a nonnegative weight vector onto the simplex."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise DimensionMismatch(f"histogram must be 1-D, got shape {p.shape}")
    if n is not None and p.shape[0] != n:
        raise DimensionMismatch(f"expected {n} weights, got {p.shape[0]}")
    if not np.all(np.isfinite(p)):
        raise ValueError("histogram has non-finite entries")
    if np.any(p < -1e-14):
        raise ValueError("histogram has negative entries")
    p = np.maximum(p, 0.0)
    total = p.sum()
    if total <= 0:
        raise ValueError("histogram has zero mass")
    return p / total


def default_rho(n: int) -> float:
    return 1e-6 / n


def floor_histogram(p, rho: float | None = None) -> np.ndarray:
    """Mix ``p`` with the uniform measure so that every entry is at least ``rho``."""
    p = as_histogram(p)
    n = p.shape[0]
    if rho is None:
        rho = default_rho(n)
    if not 0 < rho * n < 1:
        raise ValueError(f"rho={rho} must satisfy 0 < rho*n < 1")
    p = (1.0 - rho * n) * p + rho
    return p / p.sum()


def as_cost_matrix(C, n: int | None = None) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise DimensionMismatch(f"cost matrix must be square, got shape {C.shape}")
    if n is not None and C.shape[0] != n:
        raise DimensionMismatch(f"cost matrix is {C.shape[0]}x{C.shape[0]}, histograms have {n} entries")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix has non-finite entries")
    if np.any(C < 0):
        raise ValueError("cost matrix must be nonnegative")
    if np.max(np.abs(C - C.T), initial=0.0) > 1e-12:
        raise ValueError("cost matrix must be symmetric")
    return C


def cost_inf_norm(C) -> float:
    """Matrix infinity norm (largest absolute row sum)."""
    return float(np.max(np.abs(np.asarray(C, dtype=float)).sum(axis=1)))


def cost_max_entry(C) -> float:
    """Largest absolute entry; bounds the sup-norm of centered OT potentials."""
    return float(np.max(np.abs(np.asarray(C, dtype=float))))


def cost_scale(C, norm: str = "max") -> float:
    """``max`` entry or ``row_sum`` infinity norm of ``C``."""
    if norm == "max":
        return cost_max_entry(C)
    if norm == "row_sum":
        return cost_inf_norm(C)
    raise ValueError(f"unknown cost norm {norm!r}")


def squared_distance_cost(points) -> np.ndarray:
    x = np.asarray(points, dtype=float)
    return (x[:, None] - x[None, :]) ** 2


def entropy(plan) -> float:
    """E(pi) = -<pi, log pi> with 0 log 0 = 0."""
    return float(-np.sum(xlogy(plan, plan)))


def _check_pair(p, q, C):
    p = as_histogram(p)
    q = as_histogram(q, p.shape[0])
    C = as_cost_matrix(C, p.shape[0])
    return p, q, C


@dataclass(frozen=True)
class OtResult:
    """Exact OT solution: value, optimal plan and zero-mean dual potentials."""

    value: float
    plan: np.ndarray
    u: np.ndarray
    v: np.ndarray
    pivots: int = 0

    @property
    def dual_value(self) -> float:
        return float(self.u @ self.plan.sum(axis=1) + self.v @ self.plan.sum(axis=0))


@dataclass(frozen=True)
class EntropicOtResult:
    value: float
    plan: np.ndarray
    u: np.ndarray
    v: np.ndarray
    gamma: float
    iterations: int
    marginal_error: float
    log_domain: bool = False


def _center(u, v):
    shift = u.mean()
    return u - shift, v + shift


# ---------------------------------------------------------------------------
# exact OT: transportation simplex


def _northwest_corner(p, q):
    n = p.shape[0]
    a, b = p.copy(), q.copy()
    flows = {}
    i = j = 0
    while True:
        t = max(min(a[i], b[j]), 0.0)
        flows[(i, j)] = t
        a[i] -= t
        b[j] -= t
        if i == n - 1 and j == n - 1:
            break
        if j == n - 1 or (i < n - 1 and a[i] <= b[j]):
            i += 1
        else:
            j += 1
    return flows


def _tree_potentials(C, adj, n):
    # nodes 0..n-1 are rows (u), n..2n-1 are columns (v)
    pot = np.full(2 * n, np.nan)
    pot[0] = 0.0
    queue = deque([0])
    while queue:
        a = queue.popleft()
        for b in adj[a]:
            if np.isnan(pot[b]):
                i, j = (a, b - n) if a < n else (b, a - n)
                pot[b] = C[i, j] - pot[a]
                queue.append(b)
    return pot[:n], pot[n:]


def _tree_path(adj, start, goal):
    parent = {start: None}
    queue = deque([start])
    while queue:
        a = queue.popleft()
        if a == goal:
            break
        for b in adj[a]:
            if b not in parent:
                parent[b] = a
                queue.append(b)
    path = [goal]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    return path[::-1]


def _transport_simplex(p, q, C, max_pivots):
    n = p.shape[0]
    flows = _northwest_corner(p, q)
    adj = [set() for _ in range(2 * n)]
    for i, j in flows:
        adj[i].add(n + j)
        adj[n + j].add(i)
    scale = max(1.0, float(C.max(initial=0.0)))
    tol = 1e-11 * scale
    for pivot in range(max_pivots + 1):
        u, v = _tree_potentials(C, adj, n)
        reduced = C - u[:, None] - v[None, :]
        k = int(np.argmin(reduced))
        if reduced.flat[k] >= -tol:
            return flows, u, v, pivot
        i0, j0 = divmod(k, n)
        path = _tree_path(adj, i0, n + j0)
        cells = []
        for a, b in zip(path[:-1], path[1:]):
            cells.append((a, b - n) if a < n else (b, a - n))
        minus = cells[0::2]
        plus = cells[1::2]
        leave = min(minus, key=lambda c: flows[c])
        theta = flows[leave]
        for c in minus:
            flows[c] -= theta
        for c in plus:
            flows[c] += theta
        del flows[leave]
        flows[(i0, j0)] = theta
        li, lj = leave
        adj[li].discard(n + lj)
        adj[n + lj].discard(li)
        adj[i0].add(n + j0)
        adj[n + j0].add(i0)
    return None


def _highs_ot(p, q, C):
    from scipy.optimize import linprog

    n = p.shape[0]
    rows = np.kron(np.eye(n), np.ones((1, n)))
    cols = np.kron(np.ones((1, n)), np.eye(n))
    res = linprog(
        C.ravel(),
        A_eq=np.vstack([rows, cols]),
        b_eq=np.concatenate([p, q]),
        bounds=(0, None),
        method="highs",
    )
    if res.status != 0:
        raise InfeasibleNumerics(f"HiGHS failed: {res.message}")
    duals = res.eqlin.marginals
    return res.x.reshape(n, n), duals[:n], duals[n:]


def ot_exact(p, q, C, *, max_pivots: int | None = None, tol_feas: float = EXACT_FEAS_TOL) -> OtResult:
    """Solve min <C, pi> over the transport polytope U(p, q).

    Returns the optimal plan together with dual potentials (u, v) satisfying
    ``u_i + v_j <= C_ij``; ``u`` is shifted to zero mean and ``v`` carries the
    opposite shift so the dual objective is unchanged.
    """
    p, q, C = _check_pair(p, q, C)
    n = p.shape[0]
    if max_pivots is None:
        max_pivots = 50 * n * n + 100
    solved = _transport_simplex(p, q, C, max_pivots)
    if solved is None:
        log.warning("transport simplex hit %d pivots, falling back to HiGHS", max_pivots)
        plan, u, v = _highs_ot(p, q, C)
        pivots = max_pivots
    else:
        flows, u, v, pivots = solved
        plan = np.zeros((n, n))
        for (i, j), f in flows.items():
            plan[i, j] = f
    plan = np.maximum(plan, 0.0)
    err = np.abs(plan.sum(axis=1) - p).sum() + np.abs(plan.sum(axis=0) - q).sum()
    if err > tol_feas:
        raise InfeasibleNumerics(f"plan violates marginals by {err:.3e}")
    u, v = _center(u, v)
    value = float(np.sum(C * plan))
    dual = float(u @ p + v @ q)
    if abs(value - dual) > 1e-8 * max(1.0, abs(value)):
        raise InfeasibleNumerics(f"duality gap {value - dual:.3e} exceeds tolerance")
    return OtResult(value=value, plan=plan, u=u, v=v, pivots=pivots)


def exact_ot_subgradient_p(p, q, C) -> np.ndarray:
    """Zero-mean optimal dual potential u*, a subgradient of W(., q) at p."""
    return ot_exact(p, q, C).u


# ---------------------------------------------------------------------------
# entropic OT: Sinkhorn


def _sinkhorn_plain(p, q, K, tol, max_iter):
    n = p.shape[0]
    a = np.full(n, 1.0 / n)
    b = np.full(n, 1.0 / n)
    err = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        Kb = K @ b
        if it > 1:
            err = float(np.abs(a * Kb - p).sum())
            if err <= tol:
                it -= 1
                break
        if np.any(Kb <= 0) or not np.all(np.isfinite(Kb)):
            raise NumericUnderflow("K @ b underflowed; use the log-domain solver")
        a = p / Kb
        KTa = K.T @ a
        if np.any(KTa <= 0) or not np.all(np.isfinite(KTa)):
            raise NumericUnderflow("K^T @ a underflowed; use the log-domain solver")
        b = q / KTa
    else:
        err = float(np.abs(a * (K @ b) - p).sum())
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise NumericUnderflow("Sinkhorn scalings overflowed; use the log-domain solver")
    return np.log(a), np.log(b), it, err


def _sinkhorn_log(p, q, C, gamma, tol, max_iter):
    n = p.shape[0]
    logp, logq = np.log(p), np.log(q)
    f = np.full(n, -np.log(n))
    g = np.full(n, -np.log(n))
    negC = -C / gamma
    err = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        lse_rows = logsumexp(negC + g[None, :], axis=1)
        if it > 1:
            err = float(np.abs(np.exp(f + lse_rows) - p).sum())
            if err <= tol:
                it -= 1
                break
        f = logp - lse_rows
        g = logq - logsumexp(negC + f[:, None], axis=0)
    else:
        err = float(np.abs(np.exp(f + logsumexp(negC + g[None, :], axis=1)) - p).sum())
    return f, g, it, err


def entropic_ot(
    p,
    q,
    C,
    gamma: float,
    tol: float = 1e-9,
    max_iter: int = 100_000,
    *,
    log_domain: bool | None = None,
) -> EntropicOtResult:
    """Entropy-regularized OT ``min <C, pi> - gamma E(pi)`` by Sinkhorn scaling.

    Stops once the l1 row-marginal error (measured right after a column
    update, so the column marginal is exact) drops to ``tol``.  The log-domain
    iteration is used when ``log_domain`` is True, or automatically when
    ``max(C) / gamma`` exceeds ``LOG_DOMAIN_THRESHOLD``.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    p, q, C = _check_pair(p, q, C)
    if np.any(p <= 0) or np.any(q <= 0):
        raise ValueError("entropic OT needs strictly positive marginals; floor them first")
    if log_domain is None:
        log_domain = float(C.max(initial=0.0)) / gamma > LOG_DOMAIN_THRESHOLD
    if log_domain:
        loga, logb, it, err = _sinkhorn_log(p, q, C, gamma, tol, max_iter)
    else:
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            loga, logb, it, err = _sinkhorn_plain(p, q, np.exp(-C / gamma), tol, max_iter)
    if not err <= tol:
        raise NonConvergence("Sinkhorn", max_iter, err)
    logplan = loga[:, None] + logb[None, :] - C / gamma
    plan = np.exp(logplan)
    value = float(np.sum(C * plan) + gamma * np.sum(plan * logplan))
    u, v = _center(gamma * loga, gamma * logb)
    return EntropicOtResult(
        value=value,
        plan=plan,
        u=u,
        v=v,
        gamma=float(gamma),
        iterations=it,
        marginal_error=err,
        log_domain=bool(log_domain),
    )


def entropic_ot_subgradient_p(p, q, C, gamma: float, tol: float = 1e-9, **kwargs) -> np.ndarray:
    """Inexact gradient of W_gamma(., q) at p: the zero-mean Sinkhorn potential."""
    return entropic_ot(p, q, C, gamma, tol, **kwargs).u


def gradient_precision_estimate(tol: float, C, gamma: float) -> float:
    """Heuristic l2 precision of the Sinkhorn potential for a marginal tolerance."""
    return tol * cost_inf_norm(C) / gamma


def dual_value(u, q, C, gamma: float) -> float:
    """Fenchel conjugate of W_gamma(., q) evaluated at u (stable log-sum-exp)."""
    u = np.asarray(u, dtype=float)
    q = as_histogram(q, u.shape[0])
    C = as_cost_matrix(C, u.shape[0])
    lse = logsumexp((u[None, :] - C.T) / gamma, axis=1)
    return float(gamma * (-np.sum(xlogy(q, q)) + q @ lse))


def dual_gradient(u, q, C, gamma: float) -> np.ndarray:
    """Gradient of the conjugate: a q-weighted mixture of softmax rows, in the simplex."""
    u = np.asarray(u, dtype=float)
    q = as_histogram(q, u.shape[0])
    C = as_cost_matrix(C, u.shape[0])
    z = (u[None, :] - C.T) / gamma
    rows = np.exp(z - logsumexp(z, axis=1, keepdims=True))
    grad = q @ rows
    return grad / grad.sum()


def entropic_gap_bound(ot_value: float, entropic_value: float, gamma: float, n: int, atol: float = 1e-8) -> bool:
    """Check W - 2 gamma log n <= W_gamma <= W."""
    lower = ot_value - 2.0 * gamma * np.log(n)
    return bool(lower - atol <= entropic_value <= ot_value + atol)


def gradient_norm_bound(C, gamma: float, rho: float, reduce: str = "inf") -> float:
    """Euclidean bound on the entropic-OT gradient over the rho-floored simplex.

    ``reduce="inf"`` takes the infimum over the comparison row as the formula
    is usually printed; since that row may coincide with the current one it
    collapses to ``sqrt(n) * gamma * (2 log n - log rho)``.  ``reduce="sup"``
    takes the supremum, which is what the potential-difference argument
    actually delivers and is the variant that upper-bounds the Sinkhorn
    potentials.
    """
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    # spread[j, i] = max_l |C_jl - C_il|
    spread = np.max(np.abs(C[:, None, :] - C[None, :, :]), axis=2)
    if reduce == "inf":
        inner = spread.min(axis=1)
    elif reduce == "sup":
        inner = spread.max(axis=1)
    else:
        raise ValueError("reduce must be 'inf' or 'sup'")
    terms = 2.0 * gamma * np.log(n) + inner - gamma * np.log(rho)
    return float(np.sqrt(np.sum(terms**2)))


def coarse_lipschitz(C, norm: str = "l2") -> float:
    """Rough Lipschitz constants: sqrt(n)*||C||_inf in l2, ||C||_inf in l1."""
    c = cost_inf_norm(C)
    if norm == "l2":
        return float(np.sqrt(np.asarray(C).shape[0]) * c)
    if norm == "l1":
        return c
    raise ValueError("norm must be 'l2' or 'l1'")
