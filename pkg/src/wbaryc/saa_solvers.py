"""Sample average approximation: IBP, Bregman-penalized ERM and mirror prox.

The penalized problem ``min_p (1/m) sum_i W(p, q_i) + lam * B_d(p, p1)`` is
solved through the saddle reformulation where each OT term becomes

    min_{x in simplex(n^2)} max_{y in [-1, 1]^{2n}}  <d, x> + s (y^T A x - b^T y)

with ``s = 2 max|C|`` and ``b = (p, q_i)``.  ``A`` is never formed: ``A x``
is the pair (row sums, column sums) of the reshaped plan.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp, xlogy

from .errors import DimensionMismatch, NonConvergence
from .geometry import BregmanPenalty, bregman_div, bregman_grad, project_simplex, prox_grad
from .ot_core import LOG_DOMAIN_THRESHOLD, as_cost_matrix, as_histogram, floor_histogram, ot_exact

log = logging.getLogger(__name__)

_TINY = np.finfo(float).tiny
# adaptive mirror-prox steps stay within this factor of the initial 1/(2L)
_MAX_STEP_GROWTH = 1e3


@dataclass
class SaaConfig:
    m: int
    gamma: float = 0.0
    lam: float = 0.0
    eps_prime: float = 1e-6
    max_outer: int = 100_000
    seed: int = 0
    baseline: bool = False

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if self.gamma < 0 or self.lam < 0:
            raise ValueError("gamma and lambda must be nonnegative")
        if not self.baseline and (self.gamma > 0) == (self.lam > 0):
            raise ValueError("set exactly one of gamma > 0 (IBP) or lambda > 0 (penalized)")

    @property
    def path(self) -> str:
        if self.baseline:
            return "baseline"
        return "ibp" if self.gamma > 0 else "penalized"


@dataclass(frozen=True)
class SaddleState:
    """Primal plans ``x`` (m, n, n), barycenter ``p`` (n,), duals ``y`` (m, 2n)."""

    x: np.ndarray
    p: np.ndarray
    y: np.ndarray

    def validate(self, atol: float = 1e-9) -> None:
        m, n, n2 = self.x.shape
        if n != n2 or self.p.shape != (n,) or self.y.shape != (m, 2 * n):
            raise DimensionMismatch("saddle state blocks have inconsistent shapes")
        if np.any(self.x < 0) or np.any(np.abs(self.x.sum(axis=(1, 2)) - 1) > atol):
            raise ValueError("plan blocks must lie in the simplex")
        if np.any(self.p < 0) or abs(self.p.sum() - 1) > atol:
            raise ValueError("p must lie in the simplex")
        if np.any(np.abs(self.y) > 1 + atol):
            raise ValueError("dual blocks must lie in [-1, 1]")


def _stack(samples, n=None) -> np.ndarray:
    Q = np.atleast_2d(np.asarray(samples, dtype=float))
    if Q.shape[0] == 0:
        raise ValueError("need at least one sample")
    return np.stack([as_histogram(q, n) for q in Q])


# --------------------------------------------------------------------------
# Iterative Bregman projections


def _round_plan(P, r, c):
    """Move ``P`` onto the transport polytope U(r, c) (row then column clipping, rank-one fix)."""
    P = P * np.minimum(r / np.maximum(P.sum(1), _TINY), 1.0)[:, None]
    P = P * np.minimum(c / np.maximum(P.sum(0), _TINY), 1.0)[None, :]
    er = r - P.sum(1)
    ec = c - P.sum(0)
    mass = er.sum()
    if mass > 0:
        P = P + np.outer(er, ec) / mass
    return P


def _entropic_cost(P, C, gamma):
    return float(np.sum(C * P) + gamma * np.sum(xlogy(P, P)))


class _IbpPlain:
    def __init__(self, Q, C, gamma):
        self.Q, self.C, self.gamma = Q, C, gamma
        self.K = np.exp(-C / gamma)
        n, m = Q.shape
        self.a = np.ones((n, m))
        self.b = np.ones((n, m))

    def step(self, w):
        K = self.K
        KTa = K.T @ self.a
        if np.any(KTa <= 0):
            raise ArithmeticError("kernel underflow")
        self.b = self.Q / KTa
        Kb = K @ self.b
        logp = np.log(np.maximum(self.a * Kb, _TINY)) @ w
        p = np.exp(logp - logp.max())
        p /= p.sum()
        self.a = p[:, None] / Kb
        return p

    def dual_terms(self):
        # W*_q(gamma log a) = gamma <q, log(K^T a / q)>
        KTa = self.K.T @ self.a
        return self.gamma * np.sum(xlogy(self.Q, KTa) - xlogy(self.Q, self.Q), axis=0)

    def mean_potential(self, w):
        return self.gamma * (np.log(np.maximum(self.a, _TINY)) @ w)

    def plan(self, i):
        return self.a[:, i, None] * self.K * self.b[None, :, i]


class _IbpLog:
    def __init__(self, Q, C, gamma):
        self.Q, self.C, self.gamma = Q, C, gamma
        self.logK = -C / gamma
        with np.errstate(divide="ignore"):
            self.logQ = np.log(Q)
        n, m = Q.shape
        self.f = np.zeros((n, m))
        self.g = np.zeros((n, m))

    def _lse_T(self, f):
        # log(K^T exp f), column per sample
        return logsumexp(self.logK.T[:, :, None] + f[None, :, :], axis=1)

    def step(self, w):
        self.g = self.logQ - self._lse_T(self.f)
        logKb = logsumexp(self.logK[:, :, None] + self.g[None, :, :], axis=1)
        logp = (self.f + logKb) @ w
        logp -= logsumexp(logp)
        self.f = logp[:, None] - logKb
        return np.exp(logp)

    def dual_terms(self):
        lkta = self._lse_T(self.f)
        return self.gamma * np.sum(self.Q * (lkta - np.where(self.Q > 0, self.logQ, 0.0)), axis=0)

    def mean_potential(self, w):
        return self.gamma * (self.f @ w)

    def plan(self, i):
        return np.exp(self.f[:, i, None] + self.logK + self.g[None, :, i])


def run_ibp_barycenter(
    samples,
    C,
    gamma: float,
    eps_prime: Optional[float],
    *,
    weights=None,
    max_iter: int = 100_000,
    check_every: int = 10,
    log_domain: Optional[bool] = None,
    callback: Optional[Callable] = None,
):
    """Entropic barycenter of ``samples`` by iterative Bregman projections.

    Minimizes ``sum_i w_i W_gamma(p, q_i)`` (uniform weights by default).
    Every ``check_every`` iterations an optimality gap is certified: the
    upper bound evaluates rounded feasible plans at the current ``p``, the
    lower bound is the dual value of the current scalings.  Stops once the
    gap is at most ``eps_prime``; with ``eps_prime=None`` runs exactly
    ``max_iter`` iterations.  Returns ``(p, value)`` where ``value`` is the
    upper bound at ``p``.

    ``callback(k, p, gap)`` sees the uniform start at ``k=0`` and every
    iterate after it; ``gap`` is NaN between checks.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    C = as_cost_matrix(C)
    n = C.shape[0]
    Q = _stack(samples, n)
    if np.any(Q <= 0):
        Q = np.stack([floor_histogram(q) for q in Q])
    m = Q.shape[0]
    w = np.full(m, 1.0 / m) if weights is None else as_histogram(weights, m)
    if log_domain is None:
        log_domain = float(np.max(C)) / gamma > LOG_DOMAIN_THRESHOLD
    engine = (_IbpLog if log_domain else _IbpPlain)(Q.T, C, gamma)

    def certify(p):
        upper = 0.0
        for i in range(m):
            P = _round_plan(engine.plan(i), p, Q[i])
            upper += w[i] * _entropic_cost(P, C, gamma)
        # any potentials u_i give min_j (sum_i w_i u_i)_j - sum_i w_i W*_i(u_i) <= optimum
        lower = float(engine.mean_potential(w).min() - w @ engine.dual_terms())
        return upper, upper - lower

    p = np.full(n, 1.0 / n)
    if callback is not None:
        callback(0, p, math.nan)
    value, gap = math.nan, math.inf
    for k in range(1, max_iter + 1):
        try:
            p = engine.step(w)
        except ArithmeticError:
            if log_domain:
                raise
            log.warning("IBP kernel underflow; switching to the log domain")
            return run_ibp_barycenter(
                Q, C, gamma, eps_prime, weights=w, max_iter=max_iter,
                check_every=check_every, log_domain=True, callback=callback,
            )
        checked = eps_prime is not None and (k % check_every == 0 or k == max_iter)
        if checked:
            value, gap = certify(p)
        if callback is not None:
            callback(k, p, gap if checked else math.nan)
        if checked and gap <= eps_prime:
            return p, value
    if eps_prime is not None:
        raise NonConvergence("IBP", max_iter, gap)
    value, _ = certify(p)
    return p, value


def empirical_entropic_objective(p, samples, C, gamma: float, tol: float = 1e-12) -> float:
    """``(1/m) sum_i W_gamma(p, q_i)`` evaluated with Sinkhorn."""
    from .ot_core import entropic_ot

    Q = _stack(samples)
    return float(np.mean([entropic_ot(p, q, C, gamma, tol).value for q in Q]))


# --------------------------------------------------------------------------
# Saddle reformulation and mirror prox


def _scale(C) -> float:
    return 2.0 * float(np.max(np.abs(C)))


def saddle_gradient_operator(state: SaddleState, samples, C, pen: BregmanPenalty, lam: float):
    """Blocks ``(g_x, g_p, g_y)`` of the monotone operator (grad_x f, grad_p f, -grad_y f)."""
    C = np.asarray(C, dtype=float)
    Q = np.atleast_2d(np.asarray(samples, dtype=float))
    m, n, _ = state.x.shape
    if Q.shape != (m, n):
        raise DimensionMismatch(f"expected {m} samples of length {n}, got {Q.shape}")
    s = _scale(C)
    alpha = state.y[:, :n]
    beta = state.y[:, n:]
    g_x = (C[None, :, :] + s * (alpha[:, :, None] + beta[:, None, :])) / m
    g_p = -(s / m) * alpha.sum(axis=0)
    if lam:
        g_p = g_p + lam * bregman_grad(pen, state.p)
    # -grad_y f: the constraint residual b - A x
    resid = np.concatenate([state.p[None, :] - state.x.sum(axis=2), Q - state.x.sum(axis=1)], axis=1)
    g_y = (s / m) * resid
    return g_x, g_p, g_y


def saddle_objective(state: SaddleState, samples, C, pen: BregmanPenalty, lam: float) -> float:
    C = np.asarray(C, dtype=float)
    Q = np.atleast_2d(np.asarray(samples, dtype=float))
    m, n, _ = state.x.shape
    s = _scale(C)
    val = np.sum(C[None] * state.x)
    val += s * np.sum(state.y[:, :n] * (state.x.sum(axis=2) - state.p[None, :]))
    val += s * np.sum(state.y[:, n:] * (state.x.sum(axis=1) - Q))
    return float(val / m + (lam * bregman_div(pen, state.p) if lam else 0.0))


def _entropic_prox(z, xi, axes):
    logz = np.log(np.maximum(z, _TINY)) - xi
    logz = logz - logsumexp(logz, axis=axes, keepdims=True)
    return np.exp(logz)


def _kl(w, z):
    return float(np.sum(xlogy(w, w) - xlogy(w, np.maximum(z, _TINY))))


def _prox(z: SaddleState, g, eta):
    gx, gp, gy = g
    return SaddleState(
        x=_entropic_prox(z.x, eta * gx, (1, 2)),
        p=_entropic_prox(z.p, eta * gp, None),
        y=np.clip(z.y - eta * gy, -1.0, 1.0),
    )


def _bregman(z: SaddleState, w: SaddleState) -> float:
    """Distance from prox center ``z`` to ``w`` in the product setup."""
    return _kl(w.x, z.x) + _kl(w.p, z.p) + 0.5 * float(np.sum((w.y - z.y) ** 2))


def _pairing(g, z: SaddleState, w: SaddleState) -> float:
    gx, gp, gy = g
    return float(np.sum(gx * (z.x - w.x)) + gp @ (z.p - w.p) + np.sum(gy * (z.y - w.y)))


def _minimize_linear_plus_penalty(c, pen: BregmanPenalty, lam: float) -> float:
    """Certified lower bound on ``min_{p in simplex} <c, p> + lam B_d(p, p1)``.

    The minimizer has ``p_i`` proportional to ``(tau - c'_i/lam)_+^{1/(a-1)}``;
    ``tau`` is found by bisection, then a linearization at that point turns
    the approximate minimizer into a valid lower bound.
    """
    c = np.asarray(c, dtype=float)
    a = pen.a
    if lam == 0:
        return float(c.min())
    h = lambda p: float(c @ p) + lam * bregman_div(pen, p)
    cp = (c - lam * prox_grad(pen, pen.reference)) / lam

    def candidate(tau):
        gap = tau - cp
        with np.errstate(divide="ignore"):
            logv = np.where(gap > 0, np.log(np.maximum(gap, 0.0)) / (a - 1.0), -np.inf)
        return logv

    def log_phi(tau):
        logv = candidate(tau)
        return (2.0 - a) / a * logsumexp(a * logv) - logsumexp(logv) - math.log(a - 1.0)

    lo = float(cp.min())
    hi = lo + 1.0
    while log_phi(hi) > 0:
        hi = lo + 2.0 * (hi - lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if log_phi(mid) > 0:
            lo = mid
        else:
            hi = mid
    logv = candidate(hi)
    p = np.exp(logv - logsumexp(logv))
    grad = c + lam * bregman_grad(pen, p)
    return h(p) + float(grad.min() - grad @ p)


def penalized_objective(p, samples, C, pen: BregmanPenalty, lam: float) -> float:
    """``(1/m) sum_i W(p, q_i) + lam B_d(p, p1)`` with exact OT."""
    Q = _stack(samples)
    return float(np.mean([ot_exact(p, q, C).value for q in Q]) + lam * bregman_div(pen, p))


def saddle_gap_bounds(state: SaddleState, samples, C, pen: BregmanPenalty, lam: float):
    """``(upper, lower)``: penalized objective at ``state.p`` and the dual value at ``state.y``."""
    C = np.asarray(C, dtype=float)
    Q = np.atleast_2d(np.asarray(samples, dtype=float))
    m, n, _ = state.x.shape
    s = _scale(C)
    alpha = state.y[:, :n]
    beta = state.y[:, n:]
    inner = (C[None] + s * (alpha[:, :, None] + beta[:, None, :])).reshape(m, -1).min(axis=1)
    lower = float(np.sum(inner - s * np.sum(beta * Q, axis=1)) / m)
    lower += _minimize_linear_plus_penalty(-(s / m) * alpha.sum(axis=0), pen, lam)
    upper = penalized_objective(state.p, Q, C, pen, lam)
    return upper, lower


def run_mirror_prox(
    samples,
    C,
    pen: BregmanPenalty,
    lam: float,
    eps_prime: Optional[float],
    max_iter: int = 200_000,
    *,
    check_every: int = 50,
    callback: Optional[Callable] = None,
) -> np.ndarray:
    """Extragradient on the penalized saddle problem; returns the averaged ``p``.

    Entropic prox on the plan blocks and on ``p``, clipping on ``y``.  The
    step starts at ``m/(4s)`` and adapts by backtracking on the usual
    extragradient acceptance test.  ``callback(k, avg_state, gap)`` runs at
    every gap check.  With ``eps_prime=None`` the full budget runs and the
    final average is returned.
    """
    C = as_cost_matrix(C)
    n = C.shape[0]
    Q = _stack(samples, n)
    m = Q.shape[0]
    if pen.n != n:
        raise DimensionMismatch("penalty and cost dimensions differ")
    s = _scale(C)
    if s == 0:
        return pen.reference.copy()
    p1 = pen.reference
    z = SaddleState(x=p1[None, :, None] * Q[:, None, :], p=p1.copy(), y=np.zeros((m, 2 * n)))
    eta = eta0 = m / (4.0 * s)
    acc = None
    weight = 0.0
    gap = math.inf
    gz = saddle_gradient_operator(z, Q, C, pen, lam)
    for k in range(1, max_iter + 1):
        while True:
            w = _prox(z, gz, eta)
            gw = saddle_gradient_operator(w, Q, C, pen, lam)
            z1 = _prox(z, gw, eta)
            lhs = eta * (_pairing(gw, w, z1) - _pairing(gz, w, z1))
            if lhs <= _bregman(z, w) + _bregman(w, z1) + 1e-15:
                break
            eta *= 0.5
        if acc is None:
            acc = [eta * w.x, eta * w.p, eta * w.y]
        else:
            acc[0] += eta * w.x
            acc[1] += eta * w.p
            acc[2] += eta * w.y
        weight += eta
        z = z1
        gz = saddle_gradient_operator(z, Q, C, pen, lam)
        eta = min(1.2 * eta, _MAX_STEP_GROWTH * eta0)
        if k % check_every == 0 or k == max_iter:
            avg = SaddleState(x=acc[0] / weight, p=acc[1] / weight, y=acc[2] / weight)
            upper, lower = saddle_gap_bounds(avg, Q, C, pen, lam)
            gap = upper - lower
            if callback is not None:
                callback(k, avg, gap)
            if eps_prime is not None and gap <= eps_prime:
                return avg.p / avg.p.sum()
    if eps_prime is None:
        return acc[1] / acc[1].sum()
    raise NonConvergence("mirror prox", max_iter, gap)


def _strong_convexity(pen: BregmanPenalty, lam: float) -> float:
    # l1 modulus of d on the simplex with the default exponent, also valid in l2
    return lam / math.e


def run_penalized_erm(
    samples,
    C,
    pen: BregmanPenalty,
    lam: float,
    eps_prime: float,
    *,
    method: str = "mirror-prox",
    max_iter: int = 200_000,
    weights=None,
    rel_step: float = 0.005,
    callback: Optional[Callable] = None,
) -> np.ndarray:
    """Minimize ``(1/m) sum_i W(p, q_i) + lam B_d(p, p1)`` to accuracy ``eps_prime``.

    ``method="mirror-prox"`` uses the saddle solver.  ``method="subgradient"``
    runs projected subgradient steps ``1/(mu (k + k0))`` with exact OT
    subgradients from ``p1``, where the offset ``k0`` keeps the first step's
    worst-case objective increase near ``rel_step`` times the objective
    scale.  It
    stops once a weighted aggregate of the strong-convexity lower models
    certifies the gap;
    ``callback(k, p, objective, gap)`` sees every step.  The
    subgradient method also accepts ``weights`` replacing the uniform
    ``1/m``, e.g. multiplicities of repeated samples.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    C = as_cost_matrix(C)
    Q = _stack(samples, C.shape[0])
    if method == "mirror-prox":
        if weights is not None:
            raise ValueError("mirror prox runs with uniform sample weights")
        return run_mirror_prox(Q, C, pen, lam, eps_prime, max_iter, callback=callback)
    if method != "subgradient":
        raise ValueError(f"unknown method {method!r}")
    w = np.full(Q.shape[0], 1.0 / Q.shape[0]) if weights is None else as_histogram(weights, Q.shape[0])

    mu = _strong_convexity(pen, lam)
    p = pen.reference.copy()
    best, best_val, lower = p, math.inf, -math.inf
    offset = None
    # weighted sums for the aggregate of the quadratic lower models
    # f(t) >= f(p_k) + <g_k, t - p_k> + mu/2 |t - p_k|^2, weights k + k0
    S = F = GP = PP = 0.0
    G = np.zeros_like(p)
    P = np.zeros_like(p)
    for k in range(1, max_iter + 1):
        sols = [ot_exact(p, q, C) for q in Q]
        val = float(w @ [r.value for r in sols]) + lam * bregman_div(pen, p)
        g = w @ np.array([r.u for r in sols]) + lam * bregman_grad(pen, p)
        if offset is None:
            # k0 caps the first step's objective increase near rel_step * scale, where
            # scale is |f| or, if larger, the first-order variation across the simplex
            gn = math.sqrt(float(g @ g))
            scale = max(abs(val), math.sqrt(2.0) * gn, 1e-300)
            offset = max(0.0, gn * gn / (mu * rel_step * scale) - 1.0)
        wk = k + offset
        S += wk
        F += wk * val
        G += wk * g
        GP += wk * float(g @ p)
        P += wk * p
        PP += wk * float(p @ p)
        t = project_simplex((P - G / mu) / S)
        model = (F - GP + float(G @ t) + 0.5 * mu * (S * float(t @ t) - 2.0 * float(t @ P) + PP)) / S
        lower = max(lower, model)
        if val < best_val:
            best, best_val = p, val
        if callback is not None:
            callback(k, p, val, best_val - lower)
        if best_val - lower <= eps_prime:
            return best
        p = project_simplex(p - g / (mu * wk))
    raise NonConvergence("penalized subgradient", max_iter, best_val - lower)
