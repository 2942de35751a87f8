"""Command line: ``wbaryc {gen,run,plan,compare,eval}``.

Exit codes: 0 success, 2 bad arguments, 3 solver failure (an error JSON
goes to stderr and, when ``--out`` is set, to ``error.json``).
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

import numpy as np

from . import harness, io
from .errors import WbarycError
from .measures import GridSpec
from .ot_core import cost_max_entry, squared_distance_cost
from .planner import (
    PlannerInput,
    complexity_report,
    plan_sa_entropic,
    plan_sa_unregularized,
    plan_saa_entropic,
    plan_saa_penalized,
)

EXIT_OK, EXIT_USAGE, EXIT_SOLVER = 0, 2, 3


class UsageError(Exception):
    pass


def _range(text: str) -> tuple:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi, got {text!r}") from None
    return (lo, hi)


def _grid(text: str) -> GridSpec:
    try:
        return GridSpec.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, help="grid points (overrides the count in --grid)")
    p.add_argument("--m", type=int, help="number of measures")
    p.add_argument("--eps", type=float, help="target accuracy for the planner")
    p.add_argument("--alpha", type=float, default=0.05, help="confidence level for the planner")
    p.add_argument("--gamma", type=float, help="entropic regularization")
    p.add_argument("--lambda", dest="lam", type=float, help="Bregman penalty weight")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--solver", choices=harness.SOLVERS, default="smd")
    p.add_argument("--grid", type=_grid, default=GridSpec(), help="lo:hi:n (default -5:5:100)")


def _dataset_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mean-range", type=_range, default=harness.DEFAULT_MEAN_RANGE, help="lo:hi")
    p.add_argument("--std-range", type=_range, default=harness.DEFAULT_STD_RANGE, help="lo:hi")
    p.add_argument("--data", type=Path, help="dataset directory written by gen")


def _run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--N", type=int, help="SA iteration budget (default: one pass over the measures)")
    p.add_argument("--record-every", type=int, default=1)
    p.add_argument("--full-average", action="store_true", help="average SA iterates from k=1 instead of the last half")
    p.add_argument("--iters", type=int, help="iteration budget for ibp / penalized-mp")
    p.add_argument("--eps-prime", type=float, help="inner accuracy for ibp / penalized-mp")
    p.add_argument("--stream-seed", type=int, help="draw SA samples with replacement using this seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wbaryc", description="Wasserstein barycenters by SA and SAA.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="sample truncated Gaussian histograms")
    _shared(g)
    _dataset_flags(g)

    r = sub.add_parser("run", help="run one solver")
    _shared(r)
    _dataset_flags(r)
    _run_flags(r)

    pl = sub.add_parser("plan", help="print planner budgets as JSON")
    _shared(pl)
    pl.add_argument("--c-inf", type=float, help="cost scale (default: largest squared distance on the grid)")

    c = sub.add_parser("compare", help="run several solvers on one dataset")
    _shared(c)
    _dataset_flags(c)
    _run_flags(c)
    c.add_argument("--solvers", default="psgd,smd,ibp", help="comma-separated solver list")

    e = sub.add_parser("eval", help="score a result against the closed-form barycenter")
    _shared(e)
    _dataset_flags(e)
    e.add_argument("--result", type=Path, required=True, help="result.json from run")
    return parser


def _resolved_grid(args) -> GridSpec:
    grid = args.grid
    if args.n is not None and args.n != grid.n:
        grid = GridSpec(grid.lo, grid.hi, args.n)
    return grid


def _spec(args, solver=None) -> harness.ExperimentSpec:
    kw = dict(
        grid=_resolved_grid(args),
        m=args.m if args.m is not None else 200,
        seed=args.seed,
        mean_range=args.mean_range,
        std_range=args.std_range,
        solver=solver or args.solver,
        eps=args.eps,
        alpha=args.alpha,
        gamma=args.gamma,
        lam=args.lam,
    )
    if hasattr(args, "N"):
        kw.update(
            N=args.N,
            record_every=args.record_every,
            tail_average=not args.full_average,
            iters=args.iters,
            eps_prime=args.eps_prime,
            stream_seed=args.stream_seed,
        )
    return harness.ExperimentSpec(**kw)


def _dataset(args, spec):
    if args.data is not None:
        ms = harness.load_dataset(args.data)
        if args.n is not None and args.n != ms.grid.n:
            raise UsageError(f"--n {args.n} disagrees with the dataset grid ({ms.grid.n} points)")
        return ms
    return harness.generate(spec)


def _emit(obj, out: Path | None, name: str) -> None:
    print(json.dumps(io._jsonable(obj), indent=2, sort_keys=True))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        io.write_json(out / name, obj)


def cmd_gen(args) -> int:
    spec = _spec(args)
    if args.out is None:
        raise UsageError("gen needs --out")
    ms = harness.generate(spec)
    harness.save_dataset(ms, spec, args.out)
    print(json.dumps({"measures": str(args.out / "measures.csv"), "m": spec.m, "n": spec.grid.n}))
    return EXIT_OK


def cmd_run(args) -> int:
    spec = _spec(args)
    ms = _dataset(args, spec)
    out = harness.run_experiment(spec, ms)
    if args.out is not None:
        harness.save_run(out, args.out)
    summary = {k: out.result[k] for k in ("solver", "w2_to_truth", "wall_ms", "params")}
    print(json.dumps(io._jsonable(summary), sort_keys=True))
    return EXIT_OK


def cmd_plan(args) -> int:
    grid = _resolved_grid(args)
    if args.eps is None:
        raise UsageError("plan needs --eps")
    c_inf = args.c_inf if args.c_inf is not None else cost_max_entry(squared_distance_cost(grid.points))
    inp = PlannerInput(n=grid.n, eps=args.eps, alpha=args.alpha, c_inf=c_inf)
    plans = {
        "sa_unregularized_sgd": plan_sa_unregularized(inp, "sgd").to_dict(),
        "sa_unregularized_md": plan_sa_unregularized(inp, "md").to_dict(),
        "saa_penalized": plan_saa_penalized(inp).to_dict(),
    }
    if args.gamma is not None:
        plans["sa_entropic"] = plan_sa_entropic(inp, args.gamma).to_dict()
        plans["saa_entropic"] = plan_saa_entropic(inp, args.gamma).to_dict()
    report = [
        {"objective": r.objective, "algorithm": r.algorithm, "formula": r.formula, "value": r.value,
         "kappa_power": r.kappa_power, "rendered": r.rendered}
        for r in complexity_report(inp, args.gamma)
    ]
    _emit({"input": inp.__dict__, "plans": plans, "complexity": report}, args.out, "plan.json")
    return EXIT_OK


def cmd_compare(args) -> int:
    if args.out is None:
        raise UsageError("compare needs --out")
    solvers = [s.strip() for s in args.solvers.split(",") if s.strip()]
    bad = [s for s in solvers if s not in harness.SOLVERS]
    if bad or not solvers:
        raise UsageError(f"unknown solvers {bad}; choose from {', '.join(harness.SOLVERS)}")
    spec = _spec(args, solver=solvers[0])
    ms = _dataset(args, spec)
    summary = harness.compare(spec, solvers, ms, args.out, threads=harness.thread_cap())
    print(json.dumps(io._jsonable(summary), sort_keys=True))
    return EXIT_OK


def cmd_eval(args) -> int:
    spec = _spec(args)
    ms = _dataset(args, spec)
    result = io.read_json(args.result)
    p = np.asarray(result["p"], dtype=float)
    if p.shape[0] != ms.grid.n:
        raise UsageError(f"result has {p.shape[0]} weights, dataset grid has {ms.grid.n}")
    _emit({"solver": result.get("solver"), **harness.evaluate(p, ms)}, args.out, "eval.json")
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "run": cmd_run, "plan": cmd_plan, "compare": cmd_compare, "eval": cmd_eval}


def _fail(args, code: int, exc: BaseException) -> int:
    err = {"error": type(exc).__name__, "message": str(exc), "command": getattr(args, "command", None),
           "solver": getattr(args, "solver", None)}
    print(json.dumps(err), file=sys.stderr)
    out = getattr(args, "out", None)
    if out is not None and code == EXIT_SOLVER:
        try:
            out.mkdir(parents=True, exist_ok=True)
            io.write_json(out / "error.json", err)
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail(args, EXIT_USAGE, exc)
    except WbarycError as exc:
        return _fail(args, EXIT_SOLVER, exc)
    except ValueError as exc:
        # bad parameter values surface as ValueError from validation
        return _fail(args, EXIT_USAGE, exc)
    except (ArithmeticError, RuntimeError) as exc:
        traceback.print_exc()
        return _fail(args, EXIT_SOLVER, exc)


if __name__ == "__main__":
    sys.exit(main())
