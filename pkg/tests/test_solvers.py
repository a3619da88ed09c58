import numpy as np
import pytest
import scipy.sparse as sp
from scipy.optimize import linprog

from oracles import enumerate_vertices
from safeblend.errors import IterationLimit
from safeblend.numerics import sym_eig
from safeblend.solvers import (
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    LpProblem,
    MatrixVariable,
    SdpProblem,
    solve_lp,
    solve_sdp,
)
from safeblend.solvers.conic import ConeDims, conelp, smat, svec, svec_size


def random_lp(rng):
    n = int(rng.integers(1, 7))
    m_eq = int(rng.integers(0, min(n, 3)))
    m_ub = int(rng.integers(1, 9 - m_eq))
    A_ub = rng.normal(size=(m_ub, n))
    A_eq = rng.normal(size=(m_eq, n))
    z0 = rng.uniform(-1, 1, size=n)
    # mostly feasible (slack around z0), occasionally shifted to be infeasible
    b_ub = A_ub @ z0 + rng.uniform(-0.3, 1.0, size=m_ub)
    b_eq = A_eq @ z0
    return LpProblem(rng.normal(size=n), A_eq, b_eq, A_ub, b_ub, np.full(n, -3.0), np.full(n, 3.0))


def check_against_vertices(p, sol):
    best = enumerate_vertices(p)
    if best is None:
        assert sol.status == INFEASIBLE
        return False
    assert sol.status == OPTIMAL
    assert abs(sol.objective - best[0]) <= 1e-6 * max(1.0, abs(best[0]))
    return True


def test_lp_examples():
    sol = solve_lp(LpProblem([-1.0], lower=[0.0], upper=[1.0]))
    assert sol.status == OPTIMAL
    assert sol.z[0] == pytest.approx(1.0, abs=1e-8)
    assert sol.objective == pytest.approx(-1.0, abs=1e-8)
    sol = solve_lp(LpProblem([1.0, 1.0], A_ub=[[-1.0, -1.0]], b_ub=[-1.0], lower=[0.0, 0.0]))
    assert sol.objective == pytest.approx(1.0, abs=1e-8)
    sol = solve_lp(LpProblem([1.0], A_ub=[[1.0]], b_ub=[0.0], lower=[1.0]))
    assert sol.status == INFEASIBLE
    sol = solve_lp(LpProblem([-1.0], lower=[0.0]))
    assert sol.status == UNBOUNDED


def test_lp_matches_vertex_enumeration(rng):
    feasible = 0
    for _ in range(60):
        p = random_lp(rng)
        feasible += check_against_vertices(p, solve_lp(p))
    assert feasible >= 30


def test_lp_weak_duality_and_complementarity(rng):
    for _ in range(40):
        n = int(rng.integers(2, 7))
        A = rng.normal(size=(8, n))
        z0 = rng.normal(size=n)
        b = A @ z0 + rng.uniform(0.1, 1.0, size=8)
        Aeq = rng.normal(size=(1, n))
        # bounded: objective is a nonnegative combination of constraint rows
        c = -rng.uniform(0.1, 1.0, size=8) @ A
        p = LpProblem(c, Aeq, Aeq @ z0, A, b)
        sol = solve_lp(p)
        assert sol.status == OPTIMAL
        assert np.all(sol.ub_duals <= 1e-9)
        assert p.c @ sol.z >= p.b_eq @ sol.eq_duals + p.b_ub @ sol.ub_duals - 1e-7
        assert abs(sol.objective - sol.dual_objective) <= 1e-6 * max(1.0, abs(sol.objective))
        # stationarity: c = A_eq^T eq + A_ub^T ub
        np.testing.assert_allclose(Aeq.T @ sol.eq_duals + A.T @ sol.ub_duals, c, atol=1e-6)
        ref = linprog(c, A_ub=A, b_ub=b, A_eq=Aeq, b_eq=Aeq @ z0, bounds=[(None, None)] * n, method="highs")
        assert sol.objective == pytest.approx(ref.fun, abs=1e-6 * max(1.0, abs(ref.fun)))


def test_lp_bound_duals_in_dual_objective():
    p = LpProblem([1.0, 2.0], A_eq=[[1.0, 1.0]], b_eq=[1.0], lower=[0.0, 0.0], upper=[0.8, 5.0])
    sol = solve_lp(p)
    np.testing.assert_allclose(sol.z, [0.8, 0.2], atol=1e-8)
    assert sol.dual_objective == pytest.approx(sol.objective, abs=1e-8)
    assert sol.upper_duals[0] > 0.5 and sol.lower_duals[0] == pytest.approx(0.0, abs=1e-7)


def test_lp_sparse_input_matches_dense(rng):
    p = random_lp(rng)
    while enumerate_vertices(p) is None:
        p = random_lp(rng)
    q = LpProblem(p.c, sp.csr_matrix(p.A_eq), p.b_eq, sp.csr_matrix(p.A_ub), p.b_ub, p.lower, p.upper)
    a, b = solve_lp(p), solve_lp(q)
    assert a.objective == pytest.approx(b.objective, abs=1e-8)


def test_lp_dependent_equalities():
    p = LpProblem([1.0, 1.0], A_eq=[[1.0, 1.0], [2.0, 2.0]], b_eq=[1.0, 2.0], lower=[0.0, 0.0])
    sol = solve_lp(p)
    assert sol.status == OPTIMAL and sol.objective == pytest.approx(1.0, abs=1e-8)
    p = LpProblem([1.0, 1.0], A_eq=[[1.0, 1.0], [2.0, 2.0]], b_eq=[1.0, 3.0], lower=[0.0, 0.0])
    assert solve_lp(p).status == INFEASIBLE


def test_lp_iteration_limit():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(30, 10))
    p = LpProblem(-np.abs(rng.normal(size=10)), A_ub=A, b_ub=np.ones(30), lower=np.zeros(10))
    with pytest.raises(IterationLimit):
        solve_lp(p, max_iter=2)


def test_lp_json_round_trip(rng):
    p = random_lp(rng)
    q = LpProblem.from_json(p.to_json())
    np.testing.assert_array_equal(q.c, p.c)
    np.testing.assert_array_equal(q.b_ub, p.b_ub)
    np.testing.assert_array_equal(q.lower, p.lower)
    a, b = solve_lp(p), solve_lp(q)
    assert a.status == b.status


def test_svec_round_trip(rng):
    for d in (1, 2, 5):
        M = rng.normal(size=(d, d))
        M = M + M.T
        v = svec(M)
        assert v.size == svec_size(d)
        np.testing.assert_allclose(smat(v, d), M)
        N = rng.normal(size=(d, d))
        N = N + N.T
        assert svec(N) @ v == pytest.approx(np.trace(N @ M))


def max_t_below(S):
    """max t s.t. S - t I is PSD, written as a one-scalar SDP."""
    d = S.shape[0]
    return SdpProblem([-1.0], [MatrixVariable(S, -np.eye(d)[None])])


def test_sdp_eigenvalue_examples(rng):
    assert solve_sdp(max_t_below(np.diag([1.0, 3.0]))).x[0] == pytest.approx(1.0, abs=1e-6)
    assert solve_sdp(max_t_below(np.array([[2.0, 1.0], [1.0, 2.0]]))).x[0] == pytest.approx(1.0, abs=1e-6)
    for _ in range(10):
        D = np.diag(rng.uniform(-2, 5, size=int(rng.integers(1, 6))))
        assert solve_sdp(max_t_below(D)).x[0] == pytest.approx(D.diagonal().min(), abs=1e-6)


def test_sdp_returned_point_is_feasible(rng):
    for _ in range(10):
        d = int(rng.integers(2, 6))
        Q = rng.normal(size=(d, d))
        S = Q @ Q.T
        F = rng.normal(size=(2, d, d))
        F = F + F.transpose(0, 2, 1)
        # max t - 0.1 |x|_1-ish via box on x: S + x1 F1 + x2 F2 - t I >= 0, 0 <= x <= 1
        box = np.zeros((3, 2 * 2, 2 * 2))
        box[0, 0, 0], box[0, 1, 1] = -1.0, 1.0
        box[1, 2, 2], box[1, 3, 3] = -1.0, 1.0
        B0 = np.diag([1.0, 0.0, 1.0, 0.0])
        p = SdpProblem([0.1, 0.1, -1.0], [
            MatrixVariable(S, np.concatenate([F, -np.eye(d)[None]])),
            MatrixVariable(B0, box),
        ], nonneg=[0, 1])
        sol = solve_sdp(p)
        assert sol.status == OPTIMAL
        for Xj in sol.matrices:
            w, _ = sym_eig(0.5 * (Xj + Xj.T))
            assert w.min() >= -1e-7
        assert np.all(sol.x[:2] >= -1e-8) and np.all(sol.x[:2] <= 1 + 1e-8)
        # value of t equals lambda_min of the first block at the returned x
        M = S + np.tensordot(sol.x[:2], F, axes=1)
        assert sol.x[2] == pytest.approx(np.linalg.eigvalsh(M).min(), abs=1e-6)


def test_sdp_equality_constraints():
    # max t with X = [[1, x], [x, 1]] - t I PSD and x = 0.5 -> t = 0.5
    F0 = np.eye(2)
    Fx = np.array([[0.0, 1.0], [1.0, 0.0]])
    p = SdpProblem([0.0, -1.0], [MatrixVariable(F0, np.stack([Fx, -np.eye(2)]))], A_eq=[[1.0, 0.0]], b_eq=[0.5])
    sol = solve_sdp(p)
    assert sol.x[1] == pytest.approx(0.5, abs=1e-6)
    assert sol.eq_residual <= 1e-8


def test_sdp_json_round_trip():
    p = max_t_below(np.diag([2.0, 3.0]))
    q = SdpProblem.from_json(p.to_json())
    assert solve_sdp(q).x[0] == pytest.approx(2.0, abs=1e-6)


def test_sdp_iteration_limit():
    with pytest.raises(IterationLimit):
        solve_sdp(max_t_below(np.diag([1.0, 3.0, 7.0])), max_iter=1)


def test_conelp_mixed_cones_against_eigen_oracle(rng):
    # minimise -t s.t. t <= 2 (LP block) and S - t I >= 0 (PSD block)
    d = 3
    Q = rng.normal(size=(d, d))
    S = Q @ Q.T + 0.5 * np.eye(d)
    dims = ConeDims(l=1, s=(d,))
    G = np.vstack([[1.0], svec(np.eye(d))[:, None]])
    h = np.concatenate([[2.0], svec(S)])
    sol = conelp(np.array([-1.0]), G, h, dims)
    assert sol.status == "optimal"
    assert sol.x[0] == pytest.approx(min(2.0, np.linalg.eigvalsh(S).min()), abs=1e-7)
