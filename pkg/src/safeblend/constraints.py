"""Input-dependent linear constraint systems and the input spaces they live on.

A system stores one ``k x n`` template per constraint row; row ``l`` of the
left-hand side at input ``x`` is ``x @ templates[l]``.  The right-hand side is
``B @ x``.  Rows are ordered equalities first.  Inputs always carry a leading
component equal to one, so the first template row is the constant part.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DimensionError, RejectionBudgetExceeded

CONTAINS_TOL = 1e-9
MIN_ACCEPTANCE = 1e-4


def _vector(x, length, name="x"):
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != length:
        raise DimensionError(f"{name} must have length {length}, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class SlackVector:
    eq_residual: np.ndarray
    ineq_slack: np.ndarray


@dataclass(frozen=True, eq=False)
class ConstraintSystem:
    templates: np.ndarray  # (m, k, n)
    rhs_B: np.ndarray  # (m, k)
    m_eq: int

    def __post_init__(self):
        T = np.asarray(self.templates, dtype=np.float64)
        B = np.asarray(self.rhs_B, dtype=np.float64)
        if T.ndim != 3:
            raise DimensionError(f"templates must be (m, k, n), got {T.shape}")
        m, k, _ = T.shape
        if B.shape != (m, k):
            raise DimensionError(f"rhs_B must be {(m, k)}, got {B.shape}")
        if not 0 <= self.m_eq <= m:
            raise DimensionError(f"m_eq={self.m_eq} out of range for m={m}")
        if not (np.all(np.isfinite(T)) and np.all(np.isfinite(B))):
            raise ValueError("constraint data must be finite")
        T.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "templates", T)
        object.__setattr__(self, "rhs_B", B)

    @classmethod
    def from_constant(cls, A, B, m_eq: int) -> "ConstraintSystem":
        """System whose left-hand side does not depend on the input."""
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        B = np.atleast_2d(np.asarray(B, dtype=np.float64))
        m, n = A.shape
        k = B.shape[1]
        T = np.zeros((m, k, n))
        T[:, 0, :] = A
        return cls(T, B, m_eq)

    @property
    def m(self) -> int:
        return self.templates.shape[0]

    @property
    def k(self) -> int:
        return self.templates.shape[1]

    @property
    def n(self) -> int:
        return self.templates.shape[2]

    @property
    def m_ineq(self) -> int:
        return self.m - self.m_eq

    @property
    def lhs_input_independent(self) -> bool:
        return not np.any(self.templates[:, 1:, :])

    @property
    def eq_lhs_input_independent(self) -> bool:
        return not np.any(self.templates[: self.m_eq, 1:, :])

    @property
    def constant_lhs(self) -> np.ndarray:
        """The ``m x n`` matrix A when the left-hand side is input-independent."""
        return self.templates[:, 0, :]

    def lhs_at(self, x) -> np.ndarray:
        x = _vector(x, self.k)
        return np.einsum("j,ljn->ln", x, self.templates)

    def rhs_at(self, x) -> np.ndarray:
        return self.rhs_B @ _vector(x, self.k)

    def lhs_batch(self, X) -> np.ndarray:
        """(batch, m, n) left-hand sides for a (batch, k) array of inputs."""
        X = np.asarray(X, dtype=np.float64)
        if self.lhs_input_independent:
            return np.broadcast_to(self.constant_lhs, (X.shape[0], self.m, self.n))
        return np.einsum("bj,ljn->bln", X, self.templates)

    def slack(self, x, y) -> SlackVector:
        x = _vector(x, self.k)
        y = _vector(y, self.n, "y")
        r = self.rhs_at(x) - self.lhs_at(x) @ y
        return SlackVector(eq_residual=-r[: self.m_eq], ineq_slack=r[self.m_eq :])

    def slack_batch(self, X, Y):
        """Returns (eq_residual, ineq_slack) arrays for batched inputs."""
        X = np.asarray(X, dtype=np.float64)
        Y = np.asarray(Y, dtype=np.float64)
        r = X @ self.rhs_B.T - np.einsum("bln,bn->bl", self.lhs_batch(X), Y)
        return -r[:, : self.m_eq], r[:, self.m_eq :]

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "m_eq": self.m_eq,
            "m_ineq": self.m_ineq,
            "lhs_templates": self.templates.tolist(),
            "rhs_B": self.rhs_B.tolist(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "ConstraintSystem":
        T = np.asarray(d["lhs_templates"], dtype=np.float64)
        cs = cls(T.reshape(len(d["lhs_templates"]), d["k"], d["n"]), np.asarray(d["rhs_B"]), int(d["m_eq"]))
        if cs.m_ineq != int(d["m_ineq"]):
            raise DimensionError("m_eq + m_ineq does not match the number of templates")
        return cs


def lhs_at(cs: ConstraintSystem, x) -> np.ndarray:
    return cs.lhs_at(x)


def slack(cs: ConstraintSystem, x, y) -> SlackVector:
    return cs.slack(x, y)


# ---------------------------------------------------------------------------
# input spaces
# ---------------------------------------------------------------------------


def _box_array(box, k):
    b = np.asarray(box, dtype=np.float64)
    if b.shape != (k, 2):
        raise DimensionError(f"bounding box must be ({k}, 2), got {b.shape}")
    if np.any(b[:, 0] > b[:, 1]):
        raise ValueError("bounding box has an empty interval")
    return b


@dataclass(frozen=True, eq=False)
class Polytope:
    """``{x : P x >= p, x[0] = 1}``.

    Rows of ``P`` describe the non-leading coordinates (possibly using ``x[0]``
    as a homogenising coefficient); the leading one is pinned separately.
    """

    P: np.ndarray
    p: np.ndarray
    bounding_box: np.ndarray
    witness: np.ndarray

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=np.float64))
        p = np.asarray(self.p, dtype=np.float64).ravel()
        if P.shape[0] != p.shape[0]:
            raise DimensionError("P and p disagree on the number of rows")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "bounding_box", _box_array(self.bounding_box, P.shape[1]))
        object.__setattr__(self, "witness", _vector(self.witness, P.shape[1], "witness"))

    @property
    def k(self) -> int:
        return self.P.shape[1]

    @property
    def l(self) -> int:  # noqa: E743
        return self.P.shape[0]

    @classmethod
    def box(cls, lo, hi) -> "Polytope":
        """Box ``lo <= x[1:] <= hi`` lifted with a leading one."""
        lo = np.asarray(lo, dtype=np.float64).ravel()
        hi = np.asarray(hi, dtype=np.float64).ravel()
        d = lo.shape[0]
        eye = np.eye(d)
        P = np.zeros((2 * d, d + 1))
        P[:d, 1:] = eye
        P[d:, 1:] = -eye
        p = np.concatenate([lo, -hi])
        bbox = np.vstack([[1.0, 1.0], np.column_stack([lo, hi])])
        witness = np.concatenate([[1.0], 0.5 * (lo + hi)])
        return cls(P, p, bbox, witness)

    def contains(self, x, tol: float = CONTAINS_TOL) -> bool:
        x = _vector(x, self.k)
        return bool(abs(x[0] - 1.0) <= tol and np.all(self.P @ x >= self.p - tol))

    def contains_batch(self, X, tol: float = CONTAINS_TOL) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        ok = np.abs(X[:, 0] - 1.0) <= tol
        return ok & np.all(X @ self.P.T >= self.p - tol, axis=1)

    def to_json(self) -> dict:
        return {"P": self.P.tolist(), "p": self.p.tolist()}


@dataclass(frozen=True, eq=False)
class EllipsoidIntersection:
    """``{x : x[0] = 1, x^T P_j x >= 0 for all j}``."""

    Ps: np.ndarray  # (l, k, k)
    bounding_box: np.ndarray
    witness: np.ndarray

    def __post_init__(self):
        Ps = np.asarray(self.Ps, dtype=np.float64)
        if Ps.ndim == 2:
            Ps = Ps[None]
        if Ps.ndim != 3 or Ps.shape[1] != Ps.shape[2]:
            raise DimensionError(f"ellipsoid matrices must be (l, k, k), got {Ps.shape}")
        if np.max(np.abs(Ps - Ps.transpose(0, 2, 1)), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(Ps))):
            raise ValueError("ellipsoid matrices must be symmetric")
        object.__setattr__(self, "Ps", 0.5 * (Ps + Ps.transpose(0, 2, 1)))
        object.__setattr__(self, "bounding_box", _box_array(self.bounding_box, Ps.shape[1]))
        object.__setattr__(self, "witness", _vector(self.witness, Ps.shape[1], "witness"))

    @property
    def k(self) -> int:
        return self.Ps.shape[1]

    @property
    def l(self) -> int:  # noqa: E743
        return self.Ps.shape[0]

    @staticmethod
    def ellipsoid_matrix(center, shape, radius=1.0) -> np.ndarray:
        """Quadratic form of ``(xi - c)^T Q (xi - c) <= r^2`` in lifted coordinates."""
        c = np.asarray(center, dtype=np.float64).ravel()
        Q = np.atleast_2d(np.asarray(shape, dtype=np.float64))
        d = c.shape[0]
        M = np.empty((d + 1, d + 1))
        Qc = Q @ c
        M[0, 0] = radius**2 - c @ Qc
        M[0, 1:] = Qc
        M[1:, 0] = Qc
        M[1:, 1:] = -Q
        return M

    @classmethod
    def single(cls, center, shape, radius=1.0) -> "EllipsoidIntersection":
        c = np.asarray(center, dtype=np.float64).ravel()
        Qinv = np.linalg.inv(np.atleast_2d(shape))
        half = radius * np.sqrt(np.diag(Qinv))
        bbox = np.vstack([[1.0, 1.0], np.column_stack([c - half, c + half])])
        return cls(cls.ellipsoid_matrix(c, shape, radius)[None], bbox, np.concatenate([[1.0], c]))

    @classmethod
    def bounding_box_ellipsoid(cls, lo, hi) -> "EllipsoidIntersection":
        """Smallest axis-aligned ellipsoid through the corners of a box."""
        lo = np.asarray(lo, dtype=np.float64).ravel()
        hi = np.asarray(hi, dtype=np.float64).ravel()
        half = 0.5 * (hi - lo)
        return cls.single(0.5 * (lo + hi), np.diag(1.0 / half**2), np.sqrt(lo.shape[0]))

    def contains(self, x, tol: float = CONTAINS_TOL) -> bool:
        x = _vector(x, self.k)
        if abs(x[0] - 1.0) > tol:
            return False
        return bool(np.all(np.einsum("i,lij,j->l", x, self.Ps, x) >= -tol))

    def contains_batch(self, X, tol: float = CONTAINS_TOL) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        ok = np.abs(X[:, 0] - 1.0) <= tol
        q = np.einsum("bi,lij,bj->bl", X, self.Ps, X)
        return ok & np.all(q >= -tol, axis=1)

    def to_json(self) -> dict:
        return [P.tolist() for P in self.Ps]


InputSpace = Union[Polytope, EllipsoidIntersection]


def contains(space: InputSpace, x, tol: float = CONTAINS_TOL) -> bool:
    return space.contains(x, tol)


def sample(space: InputSpace, seed: int, count: int, batch: int = 4096) -> np.ndarray:
    """Uniform samples from ``space`` by rejection from its bounding box.

    Returns a ``(count, k)`` array whose first column is exactly one.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    k = space.k
    box = space.bounding_box
    if count == 0:
        return np.empty((0, k))
    rng = np.random.default_rng(seed)
    out = []
    have = drawn = 0
    while have < count:
        U = rng.uniform(box[1:, 0], box[1:, 1], size=(batch, k - 1))
        X = np.column_stack([np.ones(batch), U])
        keep = X[space.contains_batch(X, tol=1e-12)]
        drawn += batch
        out.append(keep)
        have += keep.shape[0]
        if drawn >= 10_000 and have / drawn < MIN_ACCEPTANCE:
            raise RejectionBudgetExceeded(
                f"acceptance rate {have / drawn:.2e} below {MIN_ACCEPTANCE:g} after {drawn} draws"
            )
    return np.concatenate(out)[:count]


# ---------------------------------------------------------------------------
# JSON helpers for the shared instance schema
# ---------------------------------------------------------------------------


@dataclass
class SpaceBundle:
    """The input-space part of an instance file.

    ``polytope`` is used for sampling when present; ``ellipsoids`` is the region
    certified by the SDP path.
    """

    polytope: Polytope | None = None
    ellipsoids: EllipsoidIntersection | None = None
    extra: dict = field(default_factory=dict)

    @property
    def primary(self) -> InputSpace:
        return self.polytope if self.polytope is not None else self.ellipsoids


def space_to_json(bundle: SpaceBundle) -> dict:
    d = {}
    if bundle.polytope is not None:
        d["polytope"] = bundle.polytope.to_json()
    if bundle.ellipsoids is not None:
        d["ellipsoids"] = bundle.ellipsoids.to_json()
    return d


def space_from_json(d: dict, bounding_box, witness) -> SpaceBundle:
    bundle = SpaceBundle()
    if "polytope" in d:
        bundle.polytope = Polytope(d["polytope"]["P"], d["polytope"]["p"], bounding_box, witness)
    if "ellipsoids" in d:
        Ps = np.asarray(d["ellipsoids"], dtype=np.float64)
        if bundle.polytope is None:
            bundle.ellipsoids = EllipsoidIntersection(Ps, bounding_box, witness)
        else:
            # the certified region contains the sampling polytope; widen its box
            bundle.ellipsoids = EllipsoidIntersection(Ps, _ellipsoid_box(Ps, bounding_box), witness)
    if bundle.polytope is None and bundle.ellipsoids is None:
        raise ValueError("input_space needs a 'polytope' or 'ellipsoids' entry")
    return bundle


def _ellipsoid_box(Ps, fallback):
    if Ps.shape[0] != 1:
        return fallback
    M = Ps[0]
    Q = -M[1:, 1:]
    try:
        Qinv = np.linalg.inv(Q)
    except np.linalg.LinAlgError:
        return fallback
    c = Qinv @ M[1:, 0]
    r2 = M[0, 0] + c @ Q @ c
    if r2 <= 0 or np.any(np.diag(Qinv) <= 0):
        return fallback
    half = np.sqrt(r2 * np.diag(Qinv))
    return np.vstack([[1.0, 1.0], np.column_stack([c - half, c + half])])
