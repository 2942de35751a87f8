"""Stochastic approximation: projected SGD and entropic mirror descent.

``projected_sgd`` and ``entropic_mirror_descent`` are generic online loops
over a sample stream with a user-supplied gradient oracle.  ``run_psgd_wb``
and ``run_smd_wb`` plug in the entropic-OT and exact-OT oracles to compute
Wasserstein barycenters.
"""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from .errors import MissingReference, NonConvergence, NumericUnderflow, StreamExhausted
from .geometry import project_simplex
from .measures import GridSpec, w2_distance_1d
from .ot_core import (
    as_cost_matrix,
    as_histogram,
    cost_scale,
    entropic_ot,
    floor_histogram,
    gradient_precision_estimate,
    ot_exact,
)

log = logging.getLogger(__name__)

PSGD_RULE = "strongly_convex_1_over_gamma_k"
SMD_RULE = "md_fixed_eta"

# grad(x, xi) -> (gradient, loss value f(x, xi))
Oracle = Callable[[np.ndarray, np.ndarray], "tuple[np.ndarray, float]"]


@dataclass
class SaConfig:
    gamma: float = 0.0
    N: int = 1000
    sinkhorn_tol: float = 1e-9
    step_rule: Optional[str] = None
    eta_override: Optional[float] = None
    seed: int = 0
    record_every: int = 1
    tail_average: bool = False
    rho: Optional[float] = None
    cost_norm: str = "max"

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if self.record_every < 1:
            raise ValueError("record_every must be at least 1")
        if self.step_rule is None:
            self.step_rule = PSGD_RULE if self.gamma > 0 else SMD_RULE
        if self.step_rule not in (PSGD_RULE, SMD_RULE):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if self.step_rule == PSGD_RULE and not self.gamma > 0:
            raise ValueError("the 1/(gamma k) rule needs gamma > 0")
        if self.cost_norm not in ("max", "row_sum"):
            raise ValueError(f"unknown cost norm {self.cost_norm!r}")


@dataclass(frozen=True)
class RunRecord:
    k: int
    iterate_avg: np.ndarray
    obj_estimate: float
    dist_to_truth_w2: Optional[float]
    regret_partial: float
    wall_ms: int
    delta_estimate: Optional[float] = None


def md_step_size(n: int, c_inf: float, N: int) -> float:
    """Fixed mirror-descent step ``sqrt(2 log n) / (c_inf sqrt(N))``.

    ``c_inf`` bounds the sup-norm of the subgradients; by default the
    solvers pass the largest cost entry.
    """
    return math.sqrt(2.0 * math.log(n)) / (c_inf * math.sqrt(N))


def _take(stream: Iterable, N: int):
    it = iter(stream)
    for k in range(N):
        try:
            yield next(it)
        except StopIteration:
            raise StreamExhausted(f"stream ended after {k} of {N} samples") from None


class _Averager:
    """Uniform average from k=1, or over the last half when ``tail`` is set."""

    def __init__(self, N: int, tail: bool):
        self.start = N // 2 + 1 if tail else 1
        self.total = None
        self.count = 0
        self.current = None

    def add(self, k, x):
        self.current = x
        if k >= self.start:
            self.total = x.copy() if self.total is None else self.total + x
            self.count += 1

    @property
    def value(self):
        # before the tail window opens, report the current iterate
        return self.current if self.count == 0 else self.total / self.count


def projected_sgd(
    grad: Oracle,
    samples: Iterable,
    gamma: float,
    N: int,
    x1=None,
    *,
    tail_average: bool = False,
    callback=None,
) -> np.ndarray:
    """Projected SGD on the simplex with steps ``1/(gamma k)``; returns the averaged iterate.

    ``callback(k, x_k, xi_k, loss_k, avg_k, grad_k)`` is called after each
    oracle evaluation, before the step.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    x = None if x1 is None else project_simplex(x1)
    avg = _Averager(N, tail_average)
    for k, xi in enumerate(_take(samples, N), start=1):
        if x is None:
            x = np.full(np.asarray(xi).shape[0], 1.0 / np.asarray(xi).shape[0])
        g, loss = grad(x, xi)
        avg.add(k, x)
        if callback is not None:
            callback(k, x, xi, loss, avg.value, g)
        x = project_simplex(x - g / (gamma * k))
    return avg.value


def entropic_mirror_descent(
    grad: Oracle,
    samples: Iterable,
    eta: float,
    N: int,
    x1=None,
    *,
    tail_average: bool = False,
    callback=None,
) -> np.ndarray:
    """Mirror descent with the entropy prox: ``x <- x * exp(-eta g) / Z``; returns the averaged iterate."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    logx = None if x1 is None else np.log(as_histogram(x1))
    avg = _Averager(N, tail_average)
    tiny = np.finfo(float).tiny
    for k, xi in enumerate(_take(samples, N), start=1):
        if logx is None:
            logx = np.full(np.asarray(xi).shape[0], -math.log(np.asarray(xi).shape[0]))
        x = np.exp(logx - logx.max())
        x = np.maximum(x / x.sum(), tiny)
        x /= x.sum()
        g, loss = grad(x, xi)
        avg.add(k, x)
        if callback is not None:
            callback(k, x, xi, loss, avg.value, g)
        logx = logx - eta * np.asarray(g)
        logx -= logx.max()
    return avg.value


def empirical_regret(steps: Iterable, loss: Callable, reference) -> float:
    """Realized regret ``sum_k f(x_k, xi_k) - f(x*, xi_k)`` over ``(x_k, xi_k)`` pairs."""
    if reference is None:
        raise MissingReference("regret needs a reference point x*")
    return float(sum(loss(x, xi) - loss(reference, xi) for x, xi in steps))


class _Recorder:
    def __init__(self, N, every, truth, grid, reference_loss, delta_of=None):
        self.N = N
        self.every = every
        self.truth = truth
        self.grid = grid
        self.reference_loss = reference_loss
        self.delta_of = delta_of
        self.loss_sum = 0.0
        self.regret = 0.0 if reference_loss is not None else math.nan
        self.trace: list[RunRecord] = []
        self.t0 = time.perf_counter()
        self.last_delta = None

    def __call__(self, k, x, xi, loss, avg, g):
        self.loss_sum += loss
        if self.reference_loss is not None:
            self.regret += loss - self.reference_loss(xi)
        if k == 1 or k % self.every == 0 or k == self.N:
            dist = None
            if self.truth is not None and self.grid is not None:
                dist = w2_distance_1d(avg, self.truth, self.grid)
            self.trace.append(
                RunRecord(
                    k=k,
                    iterate_avg=avg.copy(),
                    obj_estimate=self.loss_sum / k,
                    dist_to_truth_w2=dist,
                    regret_partial=self.regret,
                    wall_ms=int(round(1000 * (time.perf_counter() - self.t0))),
                    delta_estimate=self.last_delta,
                )
            )


def entropic_oracle(C, gamma: float, tol: float, rho: float | None = None, on_solve=None) -> Oracle:
    """Gradient oracle ``p, q -> (u, W_gamma(p, q))`` with one log-domain retry on failure."""

    def grad(p, q):
        p = floor_histogram(p, rho)
        if np.min(q) <= 0:
            q = floor_histogram(q, rho)
        try:
            res = entropic_ot(p, q, C, gamma, tol)
        except (NonConvergence, NumericUnderflow) as exc:
            log.warning("Sinkhorn failed (%s); retrying in the log domain", exc)
            res = entropic_ot(p, q, C, gamma, tol, max_iter=400_000, log_domain=True)
        if on_solve is not None:
            on_solve(res)
        return res.u, res.value

    return grad


def exact_oracle(C) -> Oracle:
    def grad(p, q):
        res = ot_exact(p, q, C)
        return res.u, res.value

    return grad


def run_psgd_wb(
    stream: Iterable,
    C,
    cfg: SaConfig,
    p1=None,
    *,
    truth=None,
    grid: GridSpec | None = None,
    reference=None,
):
    """Projected online SGD for the entropic barycenter; returns ``(p_tilde, trace)``.

    With ``truth`` and ``grid`` each record carries the W2 distance of the
    running average to ``truth``; with ``reference`` it carries the running
    regret against that point.
    """
    if cfg.step_rule != PSGD_RULE:
        raise ValueError("PSGD runs with the 1/(gamma k) step rule")
    C = as_cost_matrix(C)
    rec = None

    def on_solve(res):
        rec.last_delta = gradient_precision_estimate(max(res.marginal_error, 1e-300), C, cfg.gamma)

    grad = entropic_oracle(C, cfg.gamma, cfg.sinkhorn_tol, cfg.rho, on_solve)
    ref_loss = None
    if reference is not None:
        ref = floor_histogram(reference, cfg.rho)

        def ref_loss(q):
            return grad(ref, q)[1]

    rec = _Recorder(cfg.N, cfg.record_every, truth, grid, ref_loss)
    p_tilde = projected_sgd(grad, stream, cfg.gamma, cfg.N, p1, tail_average=cfg.tail_average, callback=rec)
    return p_tilde, rec.trace


def run_smd_wb(
    stream: Iterable,
    C,
    cfg: SaConfig,
    p1=None,
    *,
    truth=None,
    grid: GridSpec | None = None,
    reference=None,
):
    """Stochastic mirror descent for the unregularized barycenter; returns ``(p_breve, trace)``."""
    if cfg.step_rule != SMD_RULE:
        raise ValueError("SMD runs with the fixed-eta step rule")
    C = as_cost_matrix(C)
    n = C.shape[0]
    eta = cfg.eta_override if cfg.eta_override is not None else md_step_size(n, cost_scale(C, cfg.cost_norm), cfg.N)
    grad = exact_oracle(C)
    ref_loss = None
    if reference is not None:
        ref = as_histogram(reference)

        def ref_loss(q):
            return ot_exact(ref, q, C).value

    rec = _Recorder(cfg.N, cfg.record_every, truth, grid, ref_loss)
    if p1 is None:
        p1 = np.full(n, 1.0 / n)
    p_breve = entropic_mirror_descent(grad, stream, eta, cfg.N, p1, tail_average=cfg.tail_average, callback=rec)
    return p_breve, rec.trace


def iter_samples(histograms, N: int | None = None, seed: int | None = None):
    """Yield rows of ``histograms`` in order, or i.i.d. with replacement when ``seed`` is given."""
    histograms = np.asarray(histograms)
    if seed is None:
        rows = range(histograms.shape[0]) if N is None else itertools.islice(itertools.cycle(range(histograms.shape[0])), N)
        for i in rows:
            yield histograms[i]
        return
    rng = np.random.default_rng(seed)
    count = itertools.count() if N is None else range(N)
    for _ in count:
        yield histograms[rng.integers(histograms.shape[0])]
