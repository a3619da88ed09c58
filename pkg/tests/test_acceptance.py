"""The eight acceptance criteria, one test each.

Every test records a PASS/FAIL line (printed in the terminal summary) before
asserting, so a failing criterion is still reported alongside the others.
"""

import time

import numpy as np
import pytest

from builders import build_model
from conftest import record_criterion
from oracles import grid_maximin, grid_points, random_ellipsoid_instance, random_polytope_instance
from test_projection import kernel_basis, random_case
from test_solvers import check_against_vertices, max_t_below, random_lp
from test_tasknet import fd_gradients, rel_err
from safeblend.baselines import violation
from safeblend.blend import (
    ConstrainedModel,
    backward_constrained,
    forward_constrained,
    forward_constrained_batch,
    train_proposed,
)
from safeblend.constraints import ConstraintSystem, EllipsoidIntersection, Polytope, sample
from safeblend.errors import NoFeasibleRule
from safeblend.harness import BenchConfig, bench_instance
from safeblend.instances import generate
from safeblend.projection import build_projector
from safeblend.safenet import train_ldr_lp, train_ldr_sdp
from safeblend.solvers import solve_lp, solve_sdp
from safeblend.tasknet import MlpParams, TrainConfig, backward, forward, init_mlp

SUITE = [("dcopf", 4), ("dcopf", 6), ("dcopf", 9), ("dcopf", 12), ("dcopf", 14),
         ("portfolio", 16), ("portfolio", 16), ("portfolio", 16)]


def solved_t(train, cs, space):
    """Optimal worst-case slack, including the negative values the trainer rejects."""
    try:
        return train(cs, space)[1].t_star
    except NoFeasibleRule as exc:
        assert exc.t_star is not None
        return exc.t_star


def check(number, title, passed, detail=""):
    record_criterion(number, title, passed, detail)
    assert passed, detail


@pytest.fixture(scope="module")
def suite_results():
    cfg = BenchConfig(test_size=100, train_size=1000, epochs=100, pretrain_epochs=30, timing_repeats=1)
    t0 = time.perf_counter()
    results = []
    for j, (kind, size) in enumerate(SUITE):
        inst = generate(kind, size, j)
        rows, tm = bench_instance(inst, cfg)
        results.append((inst, {r.method: r for r in rows}, tm))
    return results, time.perf_counter() - t0, cfg


def test_criterion_1_hard_feasibility(suite_results):
    results, elapsed, _ = suite_results
    worst_eq = max(rows[m].eq_worst for _, rows, _ in results for m in ("Proposed", "LDR"))
    worst_in = max(rows[m].ineq_worst for _, rows, _ in results for m in ("Proposed", "LDR"))
    n_dc = sum(inst.kind == "dcopf" for inst, _, _ in results)
    n_pf = sum(inst.kind == "portfolio" for inst, _, _ in results)
    ok = all(rows[m].status == "ok" for _, rows, _ in results for m in rows)
    passed = ok and n_dc >= 5 and n_pf >= 3 and worst_eq <= 1e-8 and worst_in <= 1e-9 and elapsed < 600
    check(1, "hard feasibility of Proposed and LDR", passed,
          f"(eq {worst_eq:.1e}, ineq {worst_in:.1e}, {n_dc}+{n_pf} instances, {elapsed:.0f}s)")


def test_criterion_2_ldr_lp_matches_grid_oracle():
    rng = np.random.default_rng(2)
    errs = []
    above = []
    for _ in range(20):
        cs, space = random_polytope_instance(rng)
        t = solved_t(train_ldr_lp, cs, space)
        g = grid_maximin(cs, grid_points(space))[0]
        errs.append(abs(t - g))
        above.append(t - g)
    # worked example: 0 <= y <= 1 + xi on [0, 1]
    toy = ConstraintSystem.from_constant([[-1.0], [1.0]], [[0.0, 0.0], [1.0, 1.0]], 0)
    space = Polytope.box([0.0], [1.0])
    rule, rep = train_ldr_lp(toy, space)
    X = grid_points(space)
    y = X @ np.array([0.5, 0.5])
    example = (abs(rep.t_star - 0.5) <= 1e-8 and np.allclose(rule.F, [[0.5, 0.5]], atol=1e-7)
               and abs(min(y.min(), (1 + X[:, 1] - y).min()) - 0.5) <= 1e-12)
    passed = max(errs) <= 1e-3 and max(above) <= 1e-6 and example
    check(2, "LDR-LP equals grid maximin", passed, f"(max |t - grid| {max(errs):.1e}, worked example {example})")


def test_criterion_3_ldr_sdp_exact_for_one_ellipsoid():
    rng = np.random.default_rng(3)
    single, multi = [], []
    for j in range(10):
        cs, space = random_ellipsoid_instance(rng, 1, k=2 + j % 2)
        t = solved_t(train_ldr_sdp, cs, space)
        single.append(abs(t - grid_maximin(cs, grid_points(space))[0]))
    for j in range(10):
        cs, space = random_ellipsoid_instance(rng, 2 + j % 2, k=2 + j % 2)
        t = solved_t(train_ldr_sdp, cs, space)
        multi.append(t - grid_maximin(cs, grid_points(space))[0])
    # worked example: xi y <= 1 on xi in [-1, 1]; F = [0, -1] is optimal with t* = 1
    T = np.zeros((1, 2, 1))
    T[0, 1, 0] = 1.0
    toy = ConstraintSystem(T, np.array([[1.0, 0.0]]), 0)
    space = EllipsoidIntersection(np.diag([1.0, -1.0]), [[1, 1], [-1, 1]], [1.0, 0.0])
    rule, rep = train_ldr_sdp(toy, space)
    X = grid_points(space)
    worst_ref = (1.0 - X[:, 1] * (X @ np.array([0.0, -1.0]))).min()
    worst_got = (1.0 - X[:, 1] * (X @ rule.F[0])).min()
    example = abs(rep.t_star - 1.0) <= 1e-6 and abs(worst_ref - 1.0) <= 1e-12 and abs(worst_got - 1.0) <= 1e-6
    passed = max(single) <= 1e-3 and max(multi) <= 1e-6 and example
    check(3, "LDR-SDP exact at l = 1, conservative at l > 1", passed,
          f"(l=1 max err {max(single):.1e}, l>1 max excess {max(multi):.1e}, worked example {example})")


def test_criterion_4_equality_projection():
    rng = np.random.default_rng(4)
    worst = dict(idem=0.0, resid=0.0, orth=0.0, modes=0.0)
    for j in range(1000):
        cs, x = random_case(rng, input_dependent=bool(j % 2))
        proj = build_projector(cs)
        G, g = cs.lhs_at(x), cs.rhs_at(x)
        y_hat = 3.0 * rng.normal(size=cs.n)
        y = proj.project(x, y_hat)
        scale = max(1.0, np.linalg.norm(y_hat), np.linalg.norm(g))
        worst["idem"] = max(worst["idem"], np.max(np.abs(proj.project(x, y) - y)) / scale)
        worst["resid"] = max(worst["resid"], np.linalg.norm(G @ y - g) / scale)
        if cs.n > cs.m:
            Q = kernel_basis(G, rng)
            worst["orth"] = max(worst["orth"], np.max(np.abs(Q.T @ (y - y_hat))) / scale)
        if j % 2 == 0:
            other = build_projector(cs, force_per_input=True)
            worst["modes"] = max(worst["modes"], np.max(np.abs(other.project(x, y_hat) - y)))
    passed = worst["idem"] <= 1e-10 and worst["resid"] <= 1e-9 and worst["orth"] <= 1e-9 and worst["modes"] <= 1e-10
    check(4, "equality projection", passed, "(" + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + ")")


def _margin(tr, b):
    s, sig = tr.s_tn[b], tr.s_sn[b]
    r = np.sort(np.where(s < 0, -s / (sig - s), -np.inf))[::-1]
    return r[0] - r[1] if r.size > 1 else np.inf


def _composition_fd(m, x, d, eps=1e-6):
    arrs = m.task.arrays()
    out = []
    for a_idx, a in enumerate(arrs):
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            vals = []
            for sgn in (1.0, -1.0):
                pert = [b.copy() for b in arrs]
                pert[a_idx][idx] += sgn * eps
                vals.append(d @ forward_constrained(m.with_task(MlpParams.from_arrays(pert)), x)[0])
            g[idx] = (vals[0] - vals[1]) / (2 * eps)
        out.append(g)
    return out


def _preacts_clear(p, x, gap=1e-3):
    """True when no hidden pre-activation sits within ``gap`` of the ReLU kink."""
    h = x
    for W, b in zip(p.weights[:-1], p.biases[:-1]):
        z = W @ h + b
        if np.min(np.abs(z)) < gap:
            return False
        h = np.maximum(z, 0.0)
    return True


def test_criterion_5_gradient_fidelity():
    rng = np.random.default_rng(5)
    net_errs = []
    for seed in range(20):
        k, n = int(rng.integers(2, 5)), int(rng.integers(1, 4))
        p = init_mlp(k, n, seed, hidden=(5, 4))
        p = MlpParams(p.weights, tuple(0.1 * rng.normal(size=b.shape) for b in p.biases))
        X = rng.normal(size=(3, k))
        D = rng.normal(size=(3, n))
        _, cache = forward(p, X)
        net_errs.append(rel_err(backward(p, cache, D), fd_gradients(p, X, D)))
    comp_errs = []
    for seed in range(10):
        m, space = build_model("simplex" if seed % 2 == 0 else "tilted", seed, hidden=(6,))
        X = sample(space, seed + 50, 400)
        _, tr = forward_constrained_batch(m, X)
        b = next(b for b in range(X.shape[0])
                 if 0.05 < tr.alpha[b] < 0.95 and _margin(tr, b) > 1e-3 and _preacts_clear(m.task, X[b]))
        d = rng.normal(size=m.system.n)
        got = backward_constrained(m, X[b:b + 1], d[None, :])
        comp_errs.append(rel_err(got, _composition_fd(m, X[b], d)))
    passed = max(net_errs) <= 1e-4 and max(comp_errs) <= 1e-3
    check(5, "gradient fidelity", passed, f"(net {max(net_errs):.1e}, composition {max(comp_errs):.1e})")


def test_criterion_6_qualitative_ordering(suite_results):
    results, _, cfg = suite_results
    a = all(rows["Proposed"].gap_mean < rows["LDR"].gap_mean for _, rows, _ in results)
    b = (any(rows["DC3-style"].ineq_worst > 0 for _, rows, _ in results)
         and all(rows["Proposed"].ineq_worst <= 1e-9 for _, rows, _ in results))
    c = all(rows["Proposed"].iterations == 1.0 for _, rows, _ in results)
    # the corrections loop more than once on every infeasible raw prediction
    infeasible = 0
    for inst, rows, tm in results:
        cs = inst.system
        X = sample(inst.sampling_space, cfg.seed + 1000, 20)
        for x in X:
            raw = forward(tm.soft, x)[0]
            if violation(cs, x, raw) > tm.apm.tolerance:
                infeasible += 1
                c &= tm.predictor("APM")(x)[1] > 1
            G, g = cs.lhs_at(x)[: cs.m_eq], cs.rhs_at(x)[: cs.m_eq]
            completed = raw - np.linalg.lstsq(G, G @ raw - g, rcond=None)[0] if cs.m_eq else raw
            if violation(cs, x, completed) > tm.dc3.tolerance:
                c &= tm.predictor("DC3-style")(x)[1] > 1
        if infeasible:
            c &= rows["APM"].iterations > 1
    c &= infeasible > 0
    d = all(rows["Optimizer"].gap_mean == 0.0 and rows["Optimizer"].gap_worst == 0.0 for _, rows, _ in results)
    gaps = ", ".join(f"{inst.name} {rows['Proposed'].gap_mean:.2f}<{rows['LDR'].gap_mean:.2f}"
                     for inst, rows, _ in results)
    check(6, "qualitative ordering of methods", a and b and c and d, f"(a={a} b={b} c={c} d={d}; gaps {gaps})")


def test_criterion_7_universal_approximation_toy():
    # y1 + y2 = 1 + xi, y >= 0 on xi in [0, 1]; f* stays at least 0.2 (1 + xi) inside
    cs = ConstraintSystem.from_constant([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]],
                                        [[1.0, 1.0], [0.0, 0.0], [0.0, 0.0]], 1)
    space = Polytope.box([0.0], [1.0])

    def f_star(X):
        xi = X[:, 1]
        y1 = (1 + xi) * (0.5 + 0.3 * np.sin(2 * np.pi * xi))
        return np.column_stack([y1, 1 + xi - y1])

    rule, _ = train_ldr_lp(cs, space)
    X = np.column_stack([np.ones(1000), np.random.default_rng(7).uniform(0, 1, 1000)])
    grid = np.column_stack([np.ones(1000), np.linspace(0, 1, 1000)])
    # 50 pre-training epochs toward the safe rule plus 450 end-to-end epochs
    cfg = TrainConfig(epochs=450, pretrain_epochs=50, lr=1e-3, batch_size=64, mode="supervised", hidden=(64, 64))
    m = ConstrainedModel.build(init_mlp(2, 2, 0, cfg.hidden), rule, cs)
    trained = train_proposed(m, X, cfg, targets=f_star(X))
    err = float(np.abs(trained(grid) - f_star(grid)).max())
    check(7, "universal approximation on a 1-D toy", err <= 0.05, f"(sup error {err:.4f} after 500 epochs)")


def test_criterion_8_solver_self_checks():
    rng = np.random.default_rng(8)
    lp_ok = True
    try:
        for _ in range(50):
            p = random_lp(rng)
            check_against_vertices(p, solve_lp(p))
    except AssertionError:
        lp_ok = False
    errs = []
    for S in (np.diag([1.0, 3.0]), np.array([[2.0, 1.0], [1.0, 2.0]])):
        errs.append(abs(solve_sdp(max_t_below(S)).x[0] - np.linalg.eigvalsh(S).min()))
    for _ in range(10):
        Q = rng.normal(size=(4, 4))
        S = Q @ Q.T - 2 * np.eye(4)
        errs.append(abs(solve_sdp(max_t_below(S)).x[0] - np.linalg.eigvalsh(S).min()))
    passed = lp_ok and max(errs) <= 1e-6
    check(8, "LP and SDP solver self-checks", passed, f"(50 LPs vs vertices {lp_ok}, SDP max err {max(errs):.1e})")
