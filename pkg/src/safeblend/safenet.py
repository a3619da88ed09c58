"""Linear decision rules certified feasible over a whole input space.

The safe network is ``y = F x``.  Its worst-case inequality slack ``t`` is
maximised subject to a finite dual certificate:

* polytope inputs with an input-independent left-hand side give an LP,
* ellipsoid-intersection inputs give an SDP via the S-lemma.

Equality rows are imposed exactly (``A_l F = B_l`` or ``S_l(F) = 0``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .constraints import ConstraintSystem, EllipsoidIntersection, Polytope, SpaceBundle
from .errors import DimensionError, NoFeasibleRule
from .solvers import OPTIMAL, UNBOUNDED, LpProblem, MatrixVariable, SdpProblem, solve_lp, solve_sdp
from .solvers.conic import svec

# a rule is rejected only when the optimal t is clearly negative; an exact
# zero comes back from the interior-point method as roughly -1e-12
T_STAR_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class LinearDecisionRule:
    F: np.ndarray  # (n, k)
    t_star: float = np.nan
    path: str = ""

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.F, dtype=np.float64))
        if not np.all(np.isfinite(F)):
            raise ValueError("decision rule has non-finite entries")
        F.setflags(write=False)
        object.__setattr__(self, "F", F)

    @property
    def n(self) -> int:
        return self.F.shape[0]

    @property
    def k(self) -> int:
        return self.F.shape[1]

    def __call__(self, x):
        return eval_ldr(self, x)

    def to_json(self) -> dict:
        return {"F": self.F.tolist(), "t_star": float(self.t_star), "path": self.path}

    @classmethod
    def from_json(cls, d) -> "LinearDecisionRule":
        if isinstance(d, str):
            d = json.loads(d)
        return cls(np.asarray(d["F"], dtype=np.float64), float(d["t_star"]), d.get("path", ""))


@dataclass
class LdrReport:
    t_star: float
    status: str
    path: str
    Lambda: np.ndarray  # (m, l); equality rows are zero
    S: list | None = None  # slack matrices S_l(F), SDP path only
    iterations: int = 0
    num_variables: int = 0
    extra: dict = field(default_factory=dict)


def eval_ldr(rule: LinearDecisionRule, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != rule.k:
        raise DimensionError(f"input has length {x.shape[-1]}, rule expects {rule.k}")
    return x @ rule.F.T


def _polish(F, E, e):
    """Least-norm correction so that ``E vec(F) = e`` holds to rounding."""
    if E.shape[0] == 0:
        return F
    v = F.ravel()
    Ed = E.toarray() if sp.issparse(E) else E
    corr, *_ = np.linalg.lstsq(Ed, Ed @ v - e, rcond=None)
    return (v - corr).reshape(F.shape)


# ---------------------------------------------------------------------------
# polytope path (LP)
# ---------------------------------------------------------------------------


@dataclass
class LdrLp:
    """The decision-rule LP plus the bookkeeping to read its solution back."""

    problem: LpProblem
    n: int
    k: int
    m_eq: int
    m_ineq: int
    l: int  # noqa: E741
    eq_block: tuple  # (E, e) rows acting on vec(F)

    @property
    def num_variables(self) -> int:
        return self.problem.n

    def split(self, z):
        nk = self.n * self.k
        F = z[:nk].reshape(self.n, self.k)
        nl = self.m_ineq * self.l
        Lam = z[nk:nk + nl].reshape(self.m_ineq, self.l)
        mu = z[nk + nl:nk + nl + self.m_ineq]
        return F, Lam, mu, z[-1]


def build_jointly_linear_lp(cs: ConstraintSystem, space: Polytope) -> LdrLp:
    """Variables ``(vec F, Lambda, mu, t)``, row-major ``F``.

    For every inequality row ``l`` the slack ``(B_l - A_l F) x`` must be at
    least ``t`` on ``{P x >= p, x_0 = 1}``.  LP duality turns this into::

        B_l - A_l F = Lambda_l P + mu_l e_1,   Lambda_l p + mu_l >= t,   Lambda_l >= 0

    ``mu_l`` is the free multiplier of the pinned leading coordinate.
    Equality rows contribute ``A_l F = B_l`` directly.
    """
    if not isinstance(space, Polytope):
        raise TypeError("the LP path needs a Polytope input space")
    if not cs.lhs_input_independent:
        raise ValueError("the LP path needs an input-independent left-hand side")
    if space.k != cs.k:
        raise DimensionError(f"input space has k={space.k}, constraints have k={cs.k}")
    n, k, m_eq, mi, l = cs.n, cs.k, cs.m_eq, cs.m_ineq, space.l  # noqa: E741
    A = cs.constant_lhs
    B = cs.rhs_B
    nk = n * k
    nvar = nk + mi * l + mi + 1
    it = nvar - 1

    # (A_l F)_j = sum_i A[l, i] F[i, j]  ->  coefficient kron(A_l, I_k) on vec(F)
    Ik = sp.identity(k, format="csr")
    AF = sp.kron(sp.csr_matrix(A), Ik, format="csr")  # (m*k, n*k)

    # equality rows: A_l F = B_l
    E_eq = AF[: m_eq * k]
    e_eq = B[:m_eq].ravel()

    # inequality rows: A_l F + Lambda_l P + mu_l e_1 = B_l   (k equations each)
    lam_cols = sp.kron(sp.identity(mi, format="csr"), sp.csr_matrix(space.P.T), format="csr")  # (mi*k, mi*l)
    e1 = np.zeros((k, 1))
    e1[0] = 1.0
    mu_cols = sp.kron(sp.identity(mi, format="csr"), sp.csr_matrix(e1), format="csr")  # (mi*k, mi)
    ineq_rows = sp.hstack([AF[m_eq * k:], lam_cols, mu_cols, sp.csr_matrix((mi * k, 1))], format="csr")
    eq_rows = sp.hstack([E_eq, sp.csr_matrix((m_eq * k, nvar - nk))], format="csr")
    A_eq = sp.vstack([eq_rows, ineq_rows], format="csr")
    b_eq = np.concatenate([e_eq, B[m_eq:].ravel()])

    # t - Lambda_l p - mu_l <= 0
    A_ub = sp.hstack([
        sp.csr_matrix((mi, nk)),
        -sp.kron(sp.identity(mi, format="csr"), sp.csr_matrix(space.p[None, :]), format="csr"),
        -sp.identity(mi, format="csr"),
        sp.csr_matrix(np.ones((mi, 1))),
    ], format="csr")
    b_ub = np.zeros(mi)

    lower = np.full(nvar, -np.inf)
    upper = np.full(nvar, np.inf)
    lower[nk:nk + mi * l] = 0.0
    if mi == 0:
        lower[it] = upper[it] = 0.0
    c = np.zeros(nvar)
    c[it] = -1.0
    prob = LpProblem(c, A_eq, b_eq, A_ub, b_ub, lower, upper)
    return LdrLp(prob, n, k, m_eq, mi, l, (E_eq, e_eq))


def train_ldr_lp(cs: ConstraintSystem, space: Polytope, *, tol: float = 1e-9):
    built = build_jointly_linear_lp(cs, space)
    sol = solve_lp(built.problem, tol=tol)
    if sol.status == UNBOUNDED:
        raise ValueError("worst-case slack is unbounded: the constraints do not bound y from every side")
    if sol.status != OPTIMAL:
        raise NoFeasibleRule(f"decision-rule LP is {sol.status}", t_star=None)
    F, Lam, mu, t = built.split(sol.z)
    t = float(t)
    if t < -T_STAR_TOL:
        raise NoFeasibleRule(f"best worst-case slack is {t:.3g} < 0", t_star=t)
    F = _polish(F, *built.eq_block)
    Lam_full = np.zeros((cs.m, space.l))
    Lam_full[cs.m_eq:] = Lam
    report = LdrReport(t, sol.status, "lp", Lam_full, None, sol.iterations, built.num_variables,
                       {"mu": mu})
    return LinearDecisionRule(F, t, "lp"), report


# ---------------------------------------------------------------------------
# ellipsoid path (SDP)
# ---------------------------------------------------------------------------


def _sym(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def slack_matrices(cs: ConstraintSystem, F) -> np.ndarray:
    """``S_l(F) = sym(e_1 b_l^T) - sym(A_l F)`` so that slack_l(x) = x^T S_l x when x_0 = 1."""
    k = cs.k
    E1B = np.zeros((cs.m, k, k))
    E1B[:, 0, :] = cs.rhs_B
    return _sym(E1B) - _sym(cs.templates @ np.asarray(F))


@dataclass
class LdrSdp:
    problem: SdpProblem
    n: int
    k: int
    m_eq: int
    m_ineq: int
    l: int  # noqa: E741
    eq_block: tuple

    @property
    def num_variables(self) -> int:
        return self.problem.n

    def split(self, x):
        nk = self.n * self.k
        F = x[:nk].reshape(self.n, self.k)
        Lam = x[nk:nk + self.m_ineq * self.l].reshape(self.m_ineq, self.l)
        return F, Lam, x[-1]


def build_input_dependent_sdp(cs: ConstraintSystem, space: EllipsoidIntersection) -> LdrSdp:
    """Scalars ``(vec F, Lambda, t)``; one PSD matrix per inequality row::

        S_l(F) - sum_j Lambda_lj P_j - t e_1 e_1^T  >= 0

    Equality rows impose ``S_l(F) = 0`` entrywise (duplicate rows are dropped
    inside the solver).
    """
    if not isinstance(space, EllipsoidIntersection):
        raise TypeError("the SDP path needs an EllipsoidIntersection input space")
    if space.k != cs.k:
        raise DimensionError(f"input space has k={space.k}, constraints have k={cs.k}")
    n, k, m_eq, mi, l = cs.n, cs.k, cs.m_eq, cs.m_ineq, space.l  # noqa: E741
    nk = n * k
    nvar = nk + mi * l + 1
    it = nvar - 1

    # d S_l / d F[i, j] = -sym(A_l[:, i] e_j^T), shape (m, n*k, k, k)
    dF = np.zeros((cs.m, nk, k, k))
    for i in range(n):
        for j in range(k):
            M = np.zeros((cs.m, k, k))
            M[:, :, j] = cs.templates[:, :, i]
            dF[:, i * k + j] = -_sym(M)
    E1B = np.zeros((cs.m, k, k))
    E1B[:, 0, :] = cs.rhs_B
    S0 = _sym(E1B)

    mats = []
    e11 = np.zeros((k, k))
    e11[0, 0] = 1.0
    for r in range(mi):
        row = m_eq + r
        coeff = np.zeros((nvar, k, k))
        coeff[:nk] = dF[row]
        coeff[nk + r * l:nk + (r + 1) * l] = -space.Ps
        coeff[it] = -e11
        mats.append(MatrixVariable(S0[row], coeff, name=f"row{row}"))

    # equality rows: svec(S_l(F)) = 0  <=>  -svec(dF) vec(F) = svec(S0)
    E = np.zeros((0, nk))
    e = np.zeros(0)
    if m_eq:
        E = np.concatenate([-svec(dF[row]).T for row in range(m_eq)], axis=0)
        e = np.concatenate([svec(S0[row]) for row in range(m_eq)])
    A_eq = np.hstack([E, np.zeros((E.shape[0], nvar - nk))])
    b_eq = e
    if mi == 0:
        pin = np.zeros((1, nvar))
        pin[0, it] = 1.0
        A_eq = np.vstack([A_eq, pin])
        b_eq = np.concatenate([b_eq, [0.0]])
    c = np.zeros(nvar)
    c[it] = -1.0
    nonneg = np.arange(nk, nk + mi * l)
    prob = SdpProblem(c, mats, A_eq, b_eq, nonneg)
    return LdrSdp(prob, n, k, m_eq, mi, l, (E, e))


def train_ldr_sdp(cs: ConstraintSystem, space: EllipsoidIntersection, *, gap_tol: float = 1e-7):
    built = build_input_dependent_sdp(cs, space)
    sol = solve_sdp(built.problem, gap_tol=gap_tol)
    if sol.status == UNBOUNDED:
        raise ValueError("worst-case slack is unbounded: the constraints do not bound y from every side")
    if sol.status != OPTIMAL:
        raise NoFeasibleRule(f"decision-rule SDP is {sol.status}", t_star=None)
    F, Lam, t = built.split(sol.x)
    t = float(t)
    if t < -T_STAR_TOL:
        raise NoFeasibleRule(f"best worst-case slack is {t:.3g} < 0", t_star=t)
    F = _polish(F, *built.eq_block)
    Lam_full = np.zeros((cs.m, space.l))
    Lam_full[cs.m_eq:] = Lam
    S = list(slack_matrices(cs, F))
    report = LdrReport(t, sol.status, "sdp", Lam_full, S, sol.iterations, built.num_variables,
                       {"min_eigenvalues": sol.min_eigenvalues})
    return LinearDecisionRule(F, t, "sdp"), report


def train_ldr(cs: ConstraintSystem, space):
    """Polytope -> LP path, ellipsoids -> SDP path.

    A :class:`SpaceBundle` picks the LP whenever the left-hand side is
    input-independent and a polytope is available.
    """
    if isinstance(space, SpaceBundle):
        if cs.lhs_input_independent and space.polytope is not None:
            return train_ldr_lp(cs, space.polytope)
        if space.ellipsoids is None:
            raise ValueError("input-dependent left-hand side needs an ellipsoidal input space")
        return train_ldr_sdp(cs, space.ellipsoids)
    if isinstance(space, Polytope):
        return train_ldr_lp(cs, space)
    if isinstance(space, EllipsoidIntersection):
        return train_ldr_sdp(cs, space)
    raise TypeError(f"unsupported input space {type(space).__name__}")
