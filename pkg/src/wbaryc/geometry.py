"""Simplex geometry: Euclidean projection, KL divergence and the a-norm prox."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .errors import UndefinedDivergence
from .ot_core import as_histogram


def project_simplex(w) -> np.ndarray:
    """Euclidean projection of ``w`` onto the probability simplex.

    Sort-and-threshold rule: with ``r`` sorted in decreasing order, take the
    largest ``j`` with ``r_j - (sum_{i<=j} r_i - 1) / j > 0`` and shift by
    ``theta = (sum_{i<=j} r_i - 1) / j``.
    """
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("cannot project non-finite vector")
    r = -np.sort(-w, kind="stable")
    thresholds = (np.cumsum(r) - 1.0) / np.arange(1, w.shape[0] + 1)
    rho = np.nonzero(r - thresholds > 0)[0][-1]
    return np.maximum(w - thresholds[rho], 0.0)


def kl_divergence(p, r) -> float:
    """Generalized KL divergence ``<p, log(p/r)> - 1^T (p - r)``."""
    p = np.asarray(p, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any((r <= 0) & (p > 0)):
        raise UndefinedDivergence("reference has zero mass where p is positive")
    with np.errstate(divide="ignore"):
        ratio = np.where(p > 0, p / np.where(r > 0, r, 1.0), 1.0)
    return float(np.sum(xlogy(p, ratio)) - np.sum(p - r))


def prox_exponent(n: int) -> float:
    return 1.0 + 1.0 / (2.0 * np.log(n))


@dataclass(frozen=True)
class BregmanPenalty:
    """Prox function ``d(p) = ||p||_a^2 / (2(a-1))`` anchored at ``reference``.

    The exponent defaults to ``1 + 1/(2 log n)``, for which ``d`` is strongly
    convex in the l1 norm on the simplex.
    """

    reference: np.ndarray
    a: float

    @classmethod
    def for_reference(cls, reference, a: float | None = None) -> "BregmanPenalty":
        ref = as_histogram(reference)
        if np.any(ref <= 0):
            raise ValueError("penalty reference must be strictly positive")
        n = ref.shape[0]
        if a is None:
            if n < 2:
                raise ValueError("need n >= 2")
            a = prox_exponent(n)
        if not 1 < a <= 2:
            raise ValueError(f"exponent a={a} outside (1, 2]")
        return cls(reference=ref, a=float(a))

    @classmethod
    def uniform(cls, n: int) -> "BregmanPenalty":
        return cls.for_reference(np.full(n, 1.0 / n))

    @property
    def n(self) -> int:
        return self.reference.shape[0]


def _a_norm(p, a):
    return float(np.sum(np.abs(p) ** a) ** (1.0 / a))


def prox_value(pen: BregmanPenalty, p) -> float:
    p = np.asarray(p, dtype=float)
    return _a_norm(p, pen.a) ** 2 / (2.0 * (pen.a - 1.0))


def prox_grad(pen: BregmanPenalty, p) -> np.ndarray:
    """Gradient ``||p||_a^{2-a} p_i^{a-1} / (a-1)`` of the prox function."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ValueError("prox gradient needs a nonnegative argument")
    a = pen.a
    norm = _a_norm(p, a)
    if norm == 0:
        return np.zeros_like(p)
    return norm ** (2.0 - a) * p ** (a - 1.0) / (a - 1.0)


def bregman_div(pen: BregmanPenalty, p) -> float:
    """``B_d(p, p1) = d(p) - d(p1) - <grad d(p1), p - p1>`` with ``p1 = pen.reference``."""
    p = np.asarray(p, dtype=float)
    ref = pen.reference
    return prox_value(pen, p) - prox_value(pen, ref) - float(prox_grad(pen, ref) @ (p - ref))


def bregman_grad(pen: BregmanPenalty, p) -> np.ndarray:
    return prox_grad(pen, p) - prox_grad(pen, pen.reference)
