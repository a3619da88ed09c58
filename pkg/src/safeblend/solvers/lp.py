"""Linear programs on top of the conic interior-point core.

Standard form::

    minimize c^T z   s.t.  A_eq z = b_eq,  A_ub z <= b_ub,  lo <= z <= hi

Dual sign convention follows the usual sensitivity reading: ``eq_duals`` and
``ub_duals`` are the derivatives of the optimal value with respect to
``b_eq`` and ``b_ub`` (so ``ub_duals <= 0``).  With no variable bounds weak
duality reads ``c^T z >= b_eq^T eq_duals + b_ub^T ub_duals``;
:attr:`LpSolution.dual_objective` adds the bound terms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import DimensionError
from .conic import ConeDims, conelp

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"

_STATUS = {"optimal": OPTIMAL, "primal_infeasible": INFEASIBLE, "dual_infeasible": UNBOUNDED}


def _as_2d(M, ncols):
    if M is None:
        return sp.csr_matrix((0, ncols))
    if sp.issparse(M):
        return M.tocsr().astype(np.float64)
    M = np.asarray(M, dtype=np.float64)
    if M.ndim == 1:
        M = M.reshape(1, -1)
    return M


@dataclass(eq=False)
class LpProblem:
    c: np.ndarray
    A_eq: object = None
    b_eq: np.ndarray | None = None
    A_ub: object = None
    b_ub: np.ndarray | None = None
    lower: np.ndarray | None = None  # -inf entries mean unbounded below
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64).ravel()
        n = self.c.size
        self.A_eq = _as_2d(self.A_eq, n)
        self.A_ub = _as_2d(self.A_ub, n)
        self.b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, dtype=np.float64).ravel()
        self.b_ub = np.zeros(0) if self.b_ub is None else np.asarray(self.b_ub, dtype=np.float64).ravel()
        self.lower = np.full(n, -np.inf) if self.lower is None else np.broadcast_to(
            np.asarray(self.lower, dtype=np.float64), (n,)).copy()
        self.upper = np.full(n, np.inf) if self.upper is None else np.broadcast_to(
            np.asarray(self.upper, dtype=np.float64), (n,)).copy()
        for name, A, b in (("eq", self.A_eq, self.b_eq), ("ub", self.A_ub, self.b_ub)):
            if A.shape[1] != n or A.shape[0] != b.size:
                raise DimensionError(f"A_{name} {A.shape} does not match c ({n}) and b_{name} ({b.size})")
        data = [self.c, self.b_eq, self.b_ub]
        data += [A.data if sp.issparse(A) else A.ravel() for A in (self.A_eq, self.A_ub)]
        if not all(np.all(np.isfinite(d)) for d in data):
            raise ValueError("LP data must be finite")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise ValueError("bounds must not be NaN")

    @property
    def n(self) -> int:
        return self.c.size

    def to_json(self) -> str:
        """Debug dump with dense arrays and ``null`` for infinite bounds."""

        def dense(A):
            return (A.toarray() if sp.issparse(A) else A).tolist()

        def bounds(v):
            return [None if not np.isfinite(t) else float(t) for t in v]

        return json.dumps({
            "c": self.c.tolist(),
            "A_eq": dense(self.A_eq), "b_eq": self.b_eq.tolist(),
            "A_ub": dense(self.A_ub), "b_ub": self.b_ub.tolist(),
            "lower": bounds(self.lower), "upper": bounds(self.upper),
        })

    @classmethod
    def from_json(cls, s: str) -> "LpProblem":
        d = json.loads(s)
        n = len(d["c"])

        def mat(rows):
            return np.asarray(rows, dtype=np.float64).reshape(-1, n)

        def bnd(v, fill):
            return np.array([fill if t is None else t for t in v], dtype=np.float64)

        return cls(d["c"], mat(d["A_eq"]), d["b_eq"], mat(d["A_ub"]), d["b_ub"],
                   bnd(d["lower"], -np.inf), bnd(d["upper"], np.inf))


@dataclass
class LpSolution:
    status: str
    z: np.ndarray
    objective: float
    eq_duals: np.ndarray
    ub_duals: np.ndarray
    lower_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    upper_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0
    dual_objective: float = np.nan

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def solve_lp(p: LpProblem, *, tol: float = 1e-9, max_iter: int = 200) -> LpSolution:
    """Solve ``p`` with the homogeneous self-dual interior-point method.

    Raises :class:`~safeblend.errors.IterationLimit` when ``max_iter`` is hit
    without either an optimal point or an infeasibility certificate.
    """
    n = p.n
    lo_idx = np.flatnonzero(np.isfinite(p.lower))
    hi_idx = np.flatnonzero(np.isfinite(p.upper))
    m_ub = p.A_ub.shape[0]
    use_sparse = sp.issparse(p.A_ub) or sp.issparse(p.A_eq)
    if use_sparse:
        I = sp.identity(n, format="csr")
        G = sp.vstack([sp.csr_matrix(p.A_ub), -I[lo_idx], I[hi_idx]]).tocsr()
        A = sp.csr_matrix(p.A_eq)
    else:
        I = np.eye(n)
        G = np.vstack([p.A_ub, -I[lo_idx], I[hi_idx]])
        A = p.A_eq
    h = np.concatenate([p.b_ub, -p.lower[lo_idx], p.upper[hi_idx]])
    dims = ConeDims(l=G.shape[0])
    sol = conelp(p.c, G, h, dims, A, p.b_eq, feastol=tol, reltol=tol, abstol=tol * 1e-1, max_iter=max_iter)
    status = _STATUS[sol.status]
    lower_duals = np.zeros(n)
    upper_duals = np.zeros(n)
    if status != OPTIMAL:
        nan = np.full(n, np.nan)
        return LpSolution(status, nan, np.nan, np.full(p.b_eq.size, np.nan), np.full(m_ub, np.nan),
                          lower_duals * np.nan, upper_duals * np.nan, sol.iterations)
    z_ub = sol.z[:m_ub]
    lower_duals[lo_idx] = sol.z[m_ub:m_ub + lo_idx.size]
    upper_duals[hi_idx] = sol.z[m_ub + lo_idx.size:]
    eq_duals = -sol.y
    ub_duals = -z_ub
    dual_obj = float(p.b_eq @ eq_duals + p.b_ub @ ub_duals
                     + p.lower[lo_idx] @ lower_duals[lo_idx] - p.upper[hi_idx] @ upper_duals[hi_idx])
    return LpSolution(OPTIMAL, sol.x, float(p.c @ sol.x), eq_duals, ub_duals,
                      lower_duals, upper_duals, sol.iterations, dual_obj)
