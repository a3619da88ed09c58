"""Small dense semidefinite programs.

Scalars ``x`` carry a linear objective.  Each matrix variable is tied to the
scalars by the entrywise equalities

    X_j = F0_j + sum_i x_i F_j[i]

and must be positive semidefinite.  Extra linear equalities ``A_eq x = b_eq``
and sign constraints ``x_i >= 0`` on selected scalars are allowed.  Keeping the
matrix entries as affine expressions of the scalars means the Newton systems
only ever have as many unknowns as there are scalars.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError
from ..numerics import min_eigenvalue
from .conic import ConeDims, conelp, smat, svec
from .lp import INFEASIBLE, OPTIMAL, UNBOUNDED

_STATUS = {"optimal": OPTIMAL, "primal_infeasible": INFEASIBLE, "dual_infeasible": UNBOUNDED}


@dataclass(eq=False)
class MatrixVariable:
    """``X = F0 + sum_i x_i F[i]`` with ``F`` of shape ``(n_scalars, d, d)``."""

    F0: np.ndarray
    F: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.F0 = np.asarray(self.F0, dtype=np.float64)
        self.F = np.asarray(self.F, dtype=np.float64)
        d = self.F0.shape[0]
        if self.F0.shape != (d, d) or self.F.ndim != 3 or self.F.shape[1:] != (d, d):
            raise DimensionError(f"matrix variable {self.name!r}: inconsistent shapes {self.F0.shape}, {self.F.shape}")
        scale = max(1.0, float(np.max(np.abs(self.F))) if self.F.size else 1.0, float(np.max(np.abs(self.F0))))
        if (np.max(np.abs(self.F0 - self.F0.T)) > 1e-12 * scale
                or (self.F.size and np.max(np.abs(self.F - self.F.transpose(0, 2, 1))) > 1e-12 * scale)):
            raise ValueError(f"matrix variable {self.name!r}: coefficient matrices must be symmetric")

    @property
    def d(self) -> int:
        return self.F0.shape[0]

    def value(self, x) -> np.ndarray:
        return self.F0 + np.einsum("i,ijk->jk", x, self.F)


@dataclass(eq=False)
class SdpProblem:
    c: np.ndarray  # minimise c^T x
    matrices: list = field(default_factory=list)
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    nonneg: np.ndarray | None = None  # indices of scalars constrained >= 0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64).ravel()
        n = self.c.size
        self.A_eq = np.zeros((0, n)) if self.A_eq is None else np.asarray(self.A_eq, dtype=np.float64).reshape(-1, n)
        self.b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, dtype=np.float64).ravel()
        self.nonneg = np.zeros(0, dtype=np.int64) if self.nonneg is None else np.asarray(self.nonneg, dtype=np.int64)
        if self.A_eq.shape[0] != self.b_eq.size:
            raise DimensionError("A_eq and b_eq disagree")
        for M in self.matrices:
            if M.F.shape[0] != n:
                raise DimensionError(f"matrix variable {M.name!r} references {M.F.shape[0]} scalars, problem has {n}")
        if self.nonneg.size and (self.nonneg.min() < 0 or self.nonneg.max() >= n):
            raise DimensionError("nonneg index out of range")

    @property
    def n(self) -> int:
        return self.c.size

    def to_json(self) -> str:
        return json.dumps({
            "c": self.c.tolist(),
            "A_eq": self.A_eq.tolist(), "b_eq": self.b_eq.tolist(),
            "nonneg": self.nonneg.tolist(),
            "matrices": [{"name": M.name, "F0": M.F0.tolist(), "F": M.F.tolist()} for M in self.matrices],
        })

    @classmethod
    def from_json(cls, s: str) -> "SdpProblem":
        d = json.loads(s)
        mats = [MatrixVariable(m["F0"], m["F"], m.get("name", "")) for m in d["matrices"]]
        return cls(d["c"], mats, d["A_eq"], d["b_eq"], d["nonneg"])


@dataclass
class SdpSolution:
    status: str
    x: np.ndarray
    matrices: list
    objective: float
    duals: list = field(default_factory=list)
    iterations: int = 0
    min_eigenvalues: list = field(default_factory=list)
    eq_residual: float = 0.0


def solve_sdp(p: SdpProblem, *, gap_tol: float = 1e-7, feastol: float = 1e-8, max_iter: int = 100) -> SdpSolution:
    """Raises IterationLimit or NumericalFailure when the method stalls."""
    n = p.n
    nn = p.nonneg.size
    rows = []
    h = []
    if nn:
        Gl = np.zeros((nn, n))
        Gl[np.arange(nn), p.nonneg] = -1.0
        rows.append(Gl)
        h.append(np.zeros(nn))
    for M in p.matrices:
        # s = svec(X) = svec(F0) - G x  with  G = -svec(F_i) columns
        rows.append(-svec(M.F).T)
        h.append(svec(M.F0))
    G = np.vstack(rows) if rows else np.zeros((0, n))
    h = np.concatenate(h) if h else np.zeros(0)
    dims = ConeDims(l=nn, s=tuple(M.d for M in p.matrices))
    sol = conelp(p.c, G, h, dims, p.A_eq, p.b_eq, feastol=feastol, reltol=gap_tol, abstol=gap_tol * 1e-1,
                 max_iter=max_iter)
    status = _STATUS[sol.status]
    if status != OPTIMAL:
        return SdpSolution(status, np.full(n, np.nan), [], np.nan, iterations=sol.iterations)
    x = sol.x
    mats = [M.value(x) for M in p.matrices]
    duals = []
    off = nn
    for M in p.matrices:
        size = M.d * (M.d + 1) // 2
        duals.append(smat(sol.z[off:off + size], M.d))
        off += size
    eigs = [min_eigenvalue(X) for X in mats]
    eq_res = float(np.max(np.abs(p.A_eq @ x - p.b_eq))) if p.b_eq.size else 0.0
    return SdpSolution(OPTIMAL, x, mats, float(p.c @ x), duals, sol.iterations, eigs, eq_res)
