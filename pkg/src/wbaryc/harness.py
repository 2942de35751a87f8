"""Experiment plumbing behind the command line: generate, run, compare, evaluate."""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import io
from .charts import chart_from_report
from .geometry import BregmanPenalty
from .measures import GaussianFamily, GridSpec, MeasureSet, sample_truncated_gaussians, true_gaussian_barycenter, w2_distance_1d
from .ot_core import cost_max_entry, ot_exact, squared_distance_cost
from .planner import PlannerInput, plan_sa_entropic, plan_sa_unregularized, plan_saa_entropic, plan_saa_penalized
from .saa_solvers import run_ibp_barycenter, run_mirror_prox
from .sa_solvers import SaConfig, iter_samples, run_psgd_wb, run_smd_wb

SOLVERS = ("psgd", "smd", "ibp", "penalized-mp")

# Defaults for reproduction runs.  Wide measures keep the smallest barycenter
# masses well above the PSGD step noise at one pass over 2000 measures.
DEFAULT_MEAN_RANGE = (-1.0, 1.0)
DEFAULT_STD_RANGE = (2.0, 3.0)
DEFAULT_GAMMA = {"psgd": 2.0, "ibp": 0.5}
DEFAULT_IBP_ITERS = 300
DEFAULT_MP_ITERS = 20_000
DEFAULT_SINKHORN_TOL = 1e-6


@dataclass(frozen=True)
class ExperimentSpec:
    grid: GridSpec = field(default_factory=GridSpec)
    m: int = 200
    seed: int = 0
    mean_range: tuple = DEFAULT_MEAN_RANGE
    std_range: tuple = DEFAULT_STD_RANGE
    solver: str = "smd"
    eps: Optional[float] = None
    alpha: float = 0.05
    gamma: Optional[float] = None
    lam: Optional[float] = None
    N: Optional[int] = None
    record_every: int = 1
    tail_average: bool = True
    iters: Optional[int] = None
    eps_prime: Optional[float] = None
    stream_seed: Optional[int] = None
    sinkhorn_tol: float = DEFAULT_SINKHORN_TOL

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; choose from {', '.join(SOLVERS)}")
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if self.record_every < 1:
            raise ValueError("record_every must be at least 1")

    @property
    def family(self) -> GaussianFamily:
        return GaussianFamily(tuple(self.mean_range), tuple(self.std_range), self.m, self.seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = str(self.grid)
        d["mean_range"] = list(self.mean_range)
        d["std_range"] = list(self.std_range)
        return d


def generate(spec: ExperimentSpec) -> MeasureSet:
    return sample_truncated_gaussians(spec.family, spec.grid)


def save_dataset(ms: MeasureSet, spec: ExperimentSpec, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    io.write_histograms_csv(out / "measures.csv", ms.histograms)
    io.write_json(
        out / "meta.json",
        {
            "grid": {"lo": ms.grid.lo, "hi": ms.grid.hi, "n": ms.grid.n},
            "family": {
                "mean_range": list(spec.mean_range),
                "std_range": list(spec.std_range),
                "count": spec.m,
                "seed": spec.seed,
            },
            "seed": spec.seed,
            "means": ms.means,
            "stds": ms.stds,
        },
    )


def load_dataset(path: Path) -> MeasureSet:
    meta = io.read_json(path / "meta.json")
    g = meta["grid"]
    H = io.read_histograms_csv(path / "measures.csv")
    return MeasureSet(
        histograms=H,
        means=np.asarray(meta["means"], dtype=float),
        stds=np.asarray(meta["stds"], dtype=float),
        grid=GridSpec(float(g["lo"]), float(g["hi"]), int(g["n"])),
    )


def planner_echo(spec: ExperimentSpec, n: int, c_inf: float) -> Optional[dict]:
    if spec.eps is None:
        return None
    inp = PlannerInput(n=n, eps=spec.eps, alpha=spec.alpha, c_inf=c_inf)
    if spec.solver == "psgd":
        out = plan_sa_entropic(inp, spec.gamma) if spec.gamma else plan_sa_unregularized(inp, "sgd")
    elif spec.solver == "smd":
        out = plan_sa_unregularized(inp, "md")
    elif spec.solver == "ibp":
        out = plan_saa_entropic(inp, spec.gamma or plan_sa_unregularized(inp, "sgd").gamma)
    else:
        out = plan_saa_penalized(inp)
    return out.to_dict()


@dataclass
class RunOutput:
    p: np.ndarray
    trace: list
    measures: list
    result: dict


def _pick(explicit, planned_key, planner, default):
    if explicit is not None:
        return explicit, "flag"
    if planner is not None and planner.get(planned_key) is not None:
        return planner[planned_key], "planner"
    return default, "default"


def run_experiment(spec: ExperimentSpec, ms: MeasureSet) -> RunOutput:
    """Run ``spec.solver`` on ``ms``; the trace tracks W2 to the closed-form barycenter."""
    grid = ms.grid
    H = ms.histograms
    m, n = H.shape
    C = squared_distance_cost(grid.points)
    truth = true_gaussian_barycenter(ms.means, ms.stds, grid)
    planner = planner_echo(spec, n, cost_max_entry(C))
    params: dict = {}
    t0 = time.perf_counter()
    extra: dict = {}

    if spec.solver in ("psgd", "smd"):
        N = spec.N or m
        stream = iter_samples(H, N, seed=spec.stream_seed)
        params["N"] = N
        if spec.solver == "psgd":
            gamma, src = _pick(spec.gamma, "gamma", planner, DEFAULT_GAMMA["psgd"])
            params.update(gamma=gamma, gamma_source=src)
            cfg = SaConfig(gamma=gamma, N=N, sinkhorn_tol=spec.sinkhorn_tol, record_every=spec.record_every,
                           tail_average=spec.tail_average, seed=spec.seed)
            p, records = run_psgd_wb(stream, C, cfg, truth=truth, grid=grid)
        else:
            cfg = SaConfig(gamma=0.0, N=N, record_every=spec.record_every, tail_average=spec.tail_average, seed=spec.seed)
            p, records = run_smd_wb(stream, C, cfg, truth=truth, grid=grid)
        params["tail_average"] = spec.tail_average
        trace = [io.TraceRow.from_record(r) for r in records]
        measures = [r.k for r in records]
    else:
        rows: list = []
        measures = []

        if spec.solver == "ibp":
            gamma, src = _pick(spec.gamma, "gamma", planner, DEFAULT_GAMMA["ibp"])
            iters = spec.iters or DEFAULT_IBP_ITERS
            params.update(gamma=gamma, gamma_source=src, iters=iters, eps_prime=spec.eps_prime)

            def on_iter(k, p, gap):
                if k % spec.record_every == 0 or k == iters:
                    rows.append(io.TraceRow(k, math.nan, w2_distance_1d(p, truth, grid), math.nan,
                                            int(round(1000 * (time.perf_counter() - t0)))))
                    measures.append(k * m)

            p, value = run_ibp_barycenter(H, C, gamma, spec.eps_prime, max_iter=iters, callback=on_iter)
            extra["objective"] = value
        else:
            lam, src = _pick(spec.lam, "lambda", planner, None)
            if lam is None:
                raise ValueError("penalized-mp needs --lambda or --eps")
            iters = spec.iters or DEFAULT_MP_ITERS
            params.update(lam=lam, lam_source=src, eps_prime=spec.eps_prime, iters=iters)
            pen = BregmanPenalty.uniform(n)

            def on_check(k, avg, gap):
                rows.append(io.TraceRow(k, math.nan, w2_distance_1d(avg.p / avg.p.sum(), truth, grid), math.nan,
                                        int(round(1000 * (time.perf_counter() - t0)))))
                measures.append(k * m)

            p = run_mirror_prox(H, C, pen, lam, spec.eps_prime, iters, callback=on_check)
        trace = rows

    wall_ms = int(round(1000 * (time.perf_counter() - t0)))
    result = {
        "status": "ok",
        "solver": spec.solver,
        "spec": spec.to_dict(),
        "params": params,
        "planner": planner,
        "seeds": {"dataset": spec.seed, "stream": spec.stream_seed},
        "n": n,
        "m": m,
        "p": p,
        "w2_to_truth": w2_distance_1d(p, truth, grid),
        "wall_ms": wall_ms,
        **extra,
    }
    return RunOutput(p=p, trace=trace, measures=measures, result=result)


def save_run(out: RunOutput, path: Path) -> None:
    path.mkdir(parents=True, exist_ok=True)
    io.write_trace_csv(path / "trace.csv", out.trace)
    io.write_json(path / "result.json", out.result)


def evaluate(p, ms: MeasureSet) -> dict:
    """W2 to the closed-form barycenter and the empirical OT objective of ``p``."""
    C = squared_distance_cost(ms.grid.points)
    truth = true_gaussian_barycenter(ms.means, ms.stds, ms.grid)
    obj = float(np.mean([ot_exact(p, q, C).value for q in ms.histograms]))
    truth_obj = float(np.mean([ot_exact(truth, q, C).value for q in ms.histograms]))
    return {
        "w2_to_truth": w2_distance_1d(p, truth, ms.grid),
        "objective": obj,
        "objective_at_truth": truth_obj,
    }


def thread_cap(default: int = 1) -> int:
    raw = os.environ.get("WBARYC_THREADS")
    if raw is None:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"WBARYC_THREADS must be a positive integer, got {raw!r}") from None


def _job(args):
    spec, ms, path = args
    out = run_experiment(spec, ms)
    save_run(out, path)
    return out


def compare(base: ExperimentSpec, solvers: Sequence[str], ms: MeasureSet, out_dir: Path, threads: int = 1) -> dict:
    """Run each solver on the shared dataset; write report.csv, summary.json and chart.svg."""
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(replace(base, solver=s), ms, out_dir / "jobs" / f"{i:02d}-{s}") for i, s in enumerate(solvers)]
    workers = min(threads, len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(_job, jobs))
    else:
        outs = [_job(j) for j in jobs]
    rows = []
    summary = []
    for (spec, _, path), out in zip(jobs, outs):
        label = spec.solver
        for k_meas, tr in zip(out.measures, out.trace):
            rows.append((label, k_meas, tr.w2_to_truth))
        summary.append(
            {
                "solver": label,
                "initial_w2": out.trace[0].w2_to_truth if out.trace else None,
                "final_w2": out.result["w2_to_truth"],
                "measures_processed": out.measures[-1] if out.measures else 0,
                "wall_ms": out.result["wall_ms"],
                "params": out.result["params"],
            }
        )
    io.write_report_csv(out_dir / "report.csv", rows)
    io.write_json(out_dir / "summary.json", {"dataset": base.to_dict(), "solvers": summary})
    render_chart(out_dir / "report.csv", out_dir / "chart.svg")
    return {"solvers": summary}


def render_chart(report_csv: Path, svg_path: Path) -> None:
    svg_path.write_text(chart_from_report(io.read_report_csv(report_csv)))
