"""Budget planner: accuracy targets to regularization, sample and iteration budgets.

Order-of-magnitude bounds are turned into numbers with unit constants,
except where explicit constants are known (32 and 64 in the penalized
SAA rule).  Logs are natural.  Budgets are returned as exact floats; round
them up with ``math.ceil`` when a count is needed.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

EUCLIDEAN = "euclidean"
LINF = "linf"
ENTROPIC = "entropic"
UNREGULARIZED = "unregularized"

CONVENTION = "unit constants except 32 and 64 in the penalized SAA rule; natural logs"


@dataclass(frozen=True)
class PlannerInput:
    n: int
    eps: float
    alpha: float = 0.05
    c_inf: float = 1.0
    lipschitz_mode: Optional[str] = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.c_inf > 0:
            raise ValueError("c_inf must be positive")
        if self.lipschitz_mode not in (None, EUCLIDEAN, LINF):
            raise ValueError(f"unknown lipschitz mode {self.lipschitz_mode!r}")

    def lipschitz(self, default: str) -> float:
        """``sqrt(n) c_inf`` in the Euclidean mode, ``c_inf`` in the l_inf mode."""
        mode = self.lipschitz_mode or default
        return math.sqrt(self.n) * self.c_inf if mode == EUCLIDEAN else self.c_inf


@dataclass(frozen=True)
class PlannerOutput:
    pipeline: str
    gamma: Optional[float] = None
    N: Optional[float] = None
    m: Optional[float] = None
    eps_prime: Optional[float] = None
    lam: Optional[float] = None
    delta: Optional[float] = None
    conf_radius_l2: Optional[float] = None
    eta: Optional[float] = None
    complexity_notes: tuple = field(default_factory=tuple)
    convention: str = CONVENTION

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        d["complexity_notes"] = list(self.complexity_notes)
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def confidence_radius(eps: float, gamma: float) -> float:
    return math.sqrt(2.0 * eps / gamma)


def plan_sa_entropic(inp: PlannerInput, gamma: float) -> PlannerOutput:
    """Projected SGD on the entropic barycenter: ``N = M^2/(gamma eps)``, ``delta = eps``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    M = inp.lipschitz(EUCLIDEAN)
    return PlannerOutput(
        pipeline="sa-entropic",
        gamma=gamma,
        N=M * M / (gamma * inp.eps),
        delta=inp.eps,
        conf_radius_l2=confidence_radius(inp.eps, gamma),
        complexity_notes=tuple(r.rendered for r in complexity_report(inp, gamma) if r.objective == ENTROPIC),
    )


def plan_sa_unregularized(inp: PlannerInput, path: str = "sgd") -> PlannerOutput:
    """SA for the unregularized barycenter.

    ``path="sgd"``: regularize with ``gamma = eps/(4 log n)`` and plan as the
    entropic pipeline.  ``path="md"``: mirror descent with
    ``N = M_inf^2 log n / eps^2`` and its fixed step.
    """
    n = inp.n
    if path == "sgd":
        gamma = inp.eps / (4.0 * math.log(n))
        out = plan_sa_entropic(inp, gamma)
        return replace(out, pipeline="sa-unregularized-sgd")
    if path != "md":
        raise ValueError(f"unknown path {path!r}")
    M = inp.lipschitz(LINF)
    N = M * M * math.log(n) / inp.eps**2
    return PlannerOutput(
        pipeline="sa-unregularized-md",
        N=N,
        delta=0.0,
        eta=math.sqrt(2.0 * math.log(n)) / (inp.c_inf * math.sqrt(N)),
        complexity_notes=tuple(r.rendered for r in complexity_report(inp) if r.objective == UNREGULARIZED),
    )


def plan_saa_entropic(inp: PlannerInput, gamma: float) -> PlannerOutput:
    """Entropic SAA: ``m = M^2/(alpha gamma eps)``, ``eps' = eps^2 gamma / M^2``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    M2 = inp.lipschitz(EUCLIDEAN) ** 2
    return PlannerOutput(
        pipeline="saa-entropic",
        gamma=gamma,
        m=M2 / (inp.alpha * gamma * inp.eps),
        eps_prime=inp.eps**2 * gamma / M2,
        conf_radius_l2=confidence_radius(inp.eps, gamma),
        complexity_notes=tuple(r.rendered for r in complexity_report(inp, gamma) if r.objective == ENTROPIC),
    )


def plan_saa_penalized(inp: PlannerInput, r2: Optional[float] = None) -> PlannerOutput:
    """Bregman-penalized SAA.

    ``m = 32 M^2 R^2/(alpha eps^2)``, ``lam = eps/(2 R^2)``,
    ``eps' = eps^3/(64 M^2 R^2)`` with ``M = M_inf`` and ``R^2 = log n`` by
    default.
    """
    R2 = math.log(inp.n) if r2 is None else float(r2)
    if not R2 > 0:
        raise ValueError("R^2 must be positive")
    M2 = inp.lipschitz(LINF) ** 2
    return PlannerOutput(
        pipeline="saa-penalized",
        m=32.0 * M2 * R2 / (inp.alpha * inp.eps**2),
        lam=inp.eps / (2.0 * R2),
        eps_prime=inp.eps**3 / (64.0 * M2 * R2),
        complexity_notes=tuple(r.rendered for r in complexity_report(inp) if r.objective == UNREGULARIZED),
    )


@dataclass(frozen=True)
class ComplexityRow:
    """One predicted total complexity.  ``value`` multiplies ``kappa**kappa_power``."""

    objective: str
    algorithm: str
    formula: str
    value: Optional[float]
    kappa_power: float = 0.0
    rendered: str = ""


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def complexity_report(inp: PlannerInput, gamma: Optional[float] = None) -> list[ComplexityRow]:
    """Predicted total complexities with ``(n, eps, c_inf)`` substituted and kappa symbolic.

    Entropic rows use ``gamma``, defaulting to ``eps/(4 log n)``; the other
    rows are for the unregularized objective.
    """
    n, eps, c = inp.n, inp.eps, inp.c_inf
    g = eps / (4.0 * math.log(n)) if gamma is None else gamma
    rows = []

    def add(objective, alg, formula, value, kappa_power=0.0, rendered=None):
        if rendered is None:
            rendered = _fmt(value) if kappa_power == 0 else f"{_fmt(value)} * kappa^{kappa_power:g}"
        rows.append(ComplexityRow(objective, alg, formula, value, kappa_power, f"{alg}: {formula} = {rendered}"))

    pre = n**3 * c**2 / (g * eps)
    add(
        ENTROPIC,
        "Projected SGD (SA)",
        "n^3 C^2/(gamma eps) * min{exp(C/gamma) (C/gamma + log(C/(kappa eps^2))), sqrt(n C^2/(kappa gamma eps^2))}",
        None,
        rendered=(
            f"{_fmt(pre)} * min{{exp({_fmt(c / g)}) * ({_fmt(c / g)} + log({_fmt(c / eps**2)}/kappa)), "
            f"sqrt({_fmt(n * c**2 / (g * eps**2))}/kappa)}}"
        ),
    )
    add(ENTROPIC, "Accelerated IBP (SAA)", "n^4 C^4/(gamma^2 eps^2)", n**4 * c**4 / (g**2 * eps**2))
    add(UNREGULARIZED, "Projected SGD (SA)", "n^3.5 C^3/(eps^3 sqrt(eps kappa))", n**3.5 * c**3 / (eps**3 * math.sqrt(eps)), -0.5)
    add(UNREGULARIZED, "Stochastic MD (SA)", "n^3 C^2/eps^2", n**3 * c**2 / eps**2)
    add(UNREGULARIZED, "Accelerated IBP (SAA)", "n^4 C^4/eps^4", n**4 * c**4 / eps**4)
    add(UNREGULARIZED, "Mirror Prox, Bregman penalty (SAA)", "n^2.5 C^5/eps^5", n**2.5 * c**5 / eps**5)
    return rows
