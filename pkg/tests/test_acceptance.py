"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""

import math
import time

import numpy as np

import oracles
from wbaryc import harness
from wbaryc.geometry import BregmanPenalty, project_simplex
from wbaryc.ot_core import dual_gradient, dual_value, entropic_ot, ot_exact
from wbaryc.planner import PlannerInput, confidence_radius, plan_sa_entropic, plan_sa_unregularized, plan_saa_penalized
from wbaryc.saa_solvers import SaddleState, run_ibp_barycenter, run_penalized_erm, saddle_gradient_operator
from wbaryc.sa_solvers import entropic_mirror_descent, projected_sgd


def test_01_dual_gradient(report):
    t0 = time.perf_counter()
    worst_fd = worst_simplex = 0.0
    for k in range(100):
        rng = np.random.default_rng(k)
        n = 3 if k % 2 == 0 else 5
        gamma = float(rng.choice([0.05, 0.2, 1.0]))
        C = oracles.random_symmetric_cost(rng, n)
        q = oracles.random_simplex(rng, n, 0.01)
        u = rng.uniform(-1, 1, n)
        g = dual_gradient(u, q, C, gamma)
        fd = oracles.central_difference(lambda z: dual_value(z, q, C, gamma), u, 1e-5)
        worst_fd = max(worst_fd, float(np.max(np.abs(g - fd))))
        worst_simplex = max(worst_simplex, abs(g.sum() - 1.0), float(max(0.0, -g.min())))
    dt = time.perf_counter() - t0
    ok = worst_fd <= 1e-6 and worst_simplex <= 1e-12 and dt < 5
    report(1, ok, f"max |grad - FD| {worst_fd:.2e}, simplex violation {worst_simplex:.1e}, {dt:.2f}s")
    assert ok


def test_02_exact_ot_vs_vertex_enumeration(report):
    t0 = time.perf_counter()
    worst_val = worst_gap = 0.0
    for k in range(200):
        rng = np.random.default_rng(1000 + k)
        n = 2 if k % 2 == 0 else 3
        p, q = oracles.random_simplex(rng, n), oracles.random_simplex(rng, n)
        C = oracles.random_symmetric_cost(rng, n, zero_diag=bool(k % 3))
        res = ot_exact(p, q, C)
        ref, _ = oracles.ot_by_vertices(p, q, C)
        worst_val = max(worst_val, abs(res.value - ref))
        dual = float(res.u @ p + res.v @ q)
        feasible = np.all(res.u[:, None] + res.v[None, :] <= C + 1e-12)
        gap = abs(res.value - dual) / max(1.0, abs(res.value)) if feasible else math.inf
        worst_gap = max(worst_gap, gap)
    dt = time.perf_counter() - t0
    ok = worst_val <= 1e-10 and worst_gap <= 1e-8 and dt < 10
    report(2, ok, f"max value error {worst_val:.2e}, max relative duality gap {worst_gap:.2e}, {dt:.2f}s")
    assert ok


def test_03_entropic_sandwich(report):
    worst = -math.inf
    count = 0
    for gamma in (1.0, 0.1, 0.01):
        for n in (3, 8):
            for k in range(34):
                rng = np.random.default_rng(3000 + count)
                p, q = oracles.random_simplex(rng, n, 0.01), oracles.random_simplex(rng, n, 0.01)
                C = oracles.random_symmetric_cost(rng, n)
                W = ot_exact(p, q, C).value
                Wg = entropic_ot(p, q, C, gamma, 1e-10).value
                # positive excess means a violated side
                worst = max(worst, Wg - W, (W - 2 * gamma * math.log(n)) - Wg)
                count += 1
    ok = count >= 200 and worst <= 1e-9
    report(3, ok, f"{count} instances, worst violation {worst:.2e}")
    assert ok


def test_04_strong_convexity_midpoint(report):
    worst = -math.inf
    count = 0
    for gamma in (0.1, 1.0):
        for k in range(100):
            rng = np.random.default_rng(5000 + 100 * int(gamma * 10) + k)
            n = 5
            C = oracles.random_symmetric_cost(rng, n)
            q = oracles.random_simplex(rng, n, 0.01)
            p1, p2 = oracles.random_simplex(rng, n, 0.01), oracles.random_simplex(rng, n, 0.01)
            W = lambda p: entropic_ot(p, q, C, gamma, 1e-12).value
            lhs = W(0.5 * (p1 + p2))
            rhs = 0.5 * (W(p1) + W(p2)) - gamma / 8 * float((p1 - p2) @ (p1 - p2))
            worst = max(worst, lhs - rhs)
            count += 1
    ok = count == 200 and worst <= 1e-9
    report(4, ok, f"{count} pairs, worst midpoint excess {worst:.2e}")
    assert ok


def test_05_simplex_projection(report):
    rng = np.random.default_rng(7)
    worst_qp = 0.0
    for _ in range(50):
        w = rng.normal(0, 1, 3)
        worst_qp = max(worst_qp, float(np.max(np.abs(project_simplex(w) - oracles.projection_qp(w)))))
    worst_idem = worst_expand = 0.0
    for _ in range(10_000):
        a, b = rng.normal(0, 2, 50), rng.normal(0, 2, 50)
        pa, pb = project_simplex(a), project_simplex(b)
        worst_idem = max(worst_idem, float(np.max(np.abs(project_simplex(pa) - pa))))
        worst_expand = max(worst_expand, np.linalg.norm(pa - pb) - np.linalg.norm(a - b))
    ok = worst_qp <= 1e-6 and worst_idem <= 1e-12 and worst_expand <= 1e-12
    report(5, ok, f"QP gap {worst_qp:.1e}, idempotence {worst_idem:.1e}, expansion {worst_expand:.1e}")
    assert ok


def _slope(kind, Ns, seeds=20):
    n = 5
    c = np.array([0.3, 0.25, 0.2, 0.15, 0.1])
    mu, sigma = 1.0, 0.5
    f = lambda x: 0.5 * mu * float((x - c) @ (x - c))
    grad = lambda x, xi: (mu * (x - c) + xi, f(x))
    means = []
    for N in Ns:
        vals = []
        for s in range(seeds):
            noise = np.random.default_rng(s).normal(0, sigma, size=(N, n))
            x1 = np.full(n, 1 / n)
            if kind == "psgd":
                x = projected_sgd(grad, noise, mu, N, x1)
            else:
                eta = math.sqrt(2 * math.log(n)) / (math.sqrt(n) * (sigma + 1) * math.sqrt(N))
                x = entropic_mirror_descent(grad, noise, eta, N, x1)
            vals.append(f(x))
        means.append(np.mean(vals))
    return float(np.polyfit(np.log(Ns), np.log(means), 1)[0])


def test_06_sa_rate_shapes(report):
    t0 = time.perf_counter()
    Ns = [100, 1000, 10000]
    s_psgd, s_smd = _slope("psgd", Ns), _slope("smd", Ns)
    dt = time.perf_counter() - t0
    ok = s_psgd <= -0.8 and s_smd <= -0.4 and dt < 60
    report(6, ok, f"PSGD slope {s_psgd:.3f}, SMD slope {s_smd:.3f}, {dt:.1f}s")
    assert ok


def test_07_gaussian_reproduction(report):
    t0 = time.perf_counter()
    ms = harness.generate(harness.ExperimentSpec(m=2000, seed=1))
    ratios, finals = {}, {}
    for solver in ("psgd", "smd", "ibp"):
        out = harness.run_experiment(harness.ExperimentSpec(m=2000, seed=1, solver=solver), ms)
        first = out.trace[0].w2_to_truth
        finals[solver] = out.result["w2_to_truth"]
        ratios[solver] = first / finals[solver]
    dt = time.perf_counter() - t0
    ok = all(r >= 5 for r in ratios.values()) and finals["smd"] <= finals["psgd"] and dt < 600
    detail = ", ".join(f"{s} {r:.1f}x" for s, r in ratios.items())
    report(7, ok, f"reduction {detail}; final SMD {finals['smd']:.4f} vs PSGD {finals['psgd']:.4f}; {dt:.1f}s")
    assert ok


def test_08_saa_contract(report):
    worst_ibp = -math.inf
    gamma, eps_prime = 0.1, 1e-4
    for seed in range(3):
        rng = np.random.default_rng(seed)
        C = oracles.random_symmetric_cost(rng, 3)
        Q = np.array([oracles.random_simplex(rng, 3, 0.02) for _ in range(5)])
        F = lambda p: float(np.mean([oracles.sinkhorn_longdouble(p, q, C, gamma, iters=300)[0] for q in Q]))
        _, v_ref = oracles.minimize_on_simplex3(F, coarse=20, refine_starts=2)
        p, _ = run_ibp_barycenter(Q, C, gamma, eps_prime)
        worst_ibp = max(worst_ibp, F(p) - v_ref)
    worst_pen = -math.inf
    pen = BregmanPenalty.uniform(3)
    for seed in range(2):
        rng = np.random.default_rng(100 + seed)
        C = oracles.random_symmetric_cost(rng, 3)
        Q = np.array([oracles.random_simplex(rng, 3, 0.02) for _ in range(2)])
        _, v_ref, F = oracles.penalized_grid_oracle(Q, C, pen.a, pen.reference, 0.1)
        p = run_penalized_erm(Q, C, pen, 0.1, 1e-4)
        worst_pen = max(worst_pen, abs(F(p) - v_ref))
    ok = worst_ibp <= eps_prime and worst_pen <= 1e-3
    report(8, ok, f"IBP suboptimality {worst_ibp:.2e} (target {eps_prime:g}), penalized ERM {worst_pen:.2e}")
    assert ok


def test_09_planner_exactness(report):
    worst = 0.0
    rng = np.random.default_rng(9)
    for _ in range(20):
        n = int(rng.integers(2, 5000))
        eps = float(10 ** rng.uniform(-3, 0))
        alpha = float(rng.uniform(0.01, 0.2))
        c = float(10 ** rng.uniform(-1, 1))
        g_user = float(10 ** rng.uniform(-3, 0))
        inp = PlannerInput(n=n, eps=eps, alpha=alpha, c_inf=c)
        R2 = math.log(n)
        pairs = [
            (plan_sa_unregularized(inp, "sgd").gamma, eps / (4 * math.log(n))),
            (plan_saa_penalized(inp).m, 32 * c * c * R2 / (alpha * eps * eps)),
            (plan_saa_penalized(inp).eps_prime, eps**3 / (64 * c * c * R2)),
            (plan_saa_penalized(inp).lam, eps / (2 * R2)),
            (plan_sa_entropic(inp, g_user).conf_radius_l2, math.sqrt(2 * eps / g_user)),
            (confidence_radius(eps, g_user), math.sqrt(2 * eps / g_user)),
        ]
        worst = max(worst, max(abs(a - b) / abs(b) for a, b in pairs))
    ok = worst <= 1e-12
    report(9, ok, f"20 inputs, max relative error {worst:.1e}")
    assert ok


def test_10_saddle_operator(report):
    worst = 0.0
    for m in (1, 2):
        for k in range(10):
            rng = np.random.default_rng(300 + 10 * m + k)
            C = oracles.random_symmetric_cost(rng, 2)
            Q = np.array([oracles.random_simplex(rng, 2, 0.05) for _ in range(m)])
            pen = BregmanPenalty.for_reference(oracles.random_simplex(rng, 2, 0.05))
            lam = float(rng.uniform(0, 2))
            x = rng.dirichlet(np.ones(4), size=m)
            p = oracles.random_simplex(rng, 2, 0.05)
            y = rng.uniform(-1, 1, size=(m, 4))
            gx, gp, gy = saddle_gradient_operator(SaddleState(x.reshape(m, 2, 2), p, y), Q, C, pen, lam)
            dx, dp, dy = oracles.dense_saddle_operator(x, p, y, Q, C, pen.a, pen.reference, lam)
            worst = max(worst, np.max(np.abs(gx.reshape(m, 4) - dx)), np.max(np.abs(gp - dp)), np.max(np.abs(gy - dy)))
    rng = np.random.default_rng(42)
    min_excess = math.inf
    for k in range(100):
        m, n = int(rng.integers(1, 4)), int(rng.integers(2, 5))
        C = oracles.random_symmetric_cost(rng, n)
        Q = np.array([oracles.random_simplex(rng, n, 0.02) for _ in range(m)])
        pen = BregmanPenalty.uniform(n)
        lam = float(rng.uniform(0, 2))
        states = [
            SaddleState(rng.dirichlet(np.ones(n * n), size=m).reshape(m, n, n), rng.dirichlet(np.ones(n)),
                        rng.uniform(-1, 1, size=(m, 2 * n)))
            for _ in range(2)
        ]
        ga, gb = (saddle_gradient_operator(s, Q, C, pen, lam) for s in states)
        a, b = states
        inner = sum(float(np.sum((u - v) * (za - zb))) for u, v, za, zb in zip(ga, gb, (a.x, a.p, a.y), (b.x, b.p, b.y)))
        min_excess = min(min_excess, inner - lam / math.e * np.abs(a.p - b.p).sum() ** 2)
    ok = worst <= 1e-12 and min_excess >= -1e-12
    report(10, ok, f"max dense-oracle error {worst:.1e}, min monotonicity margin {min_excess:.2e}")
    assert ok
