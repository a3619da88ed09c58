"""Orthogonal projection onto the equality-constraint affine subspace.

With an input-independent equality block ``G`` the pseudo-inverse
``Gbar = G^T (G G^T)^{-1}`` is cached once and a projection costs two
matrix-vector products.  Otherwise the multipliers
``lam = (G(x) G(x)^T)^{-1} (G(x) y - g(x))`` are recomputed per input.

Forming ``G G^T`` squares the condition number of ``G``, so every path does
one step of iterative refinement: the residual left by the first correction
is projected out again with the same factor.  The result is the same affine
map to rounding, and its linear part is ``(I - Gbar G)^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constraints import ConstraintSystem
from .errors import DimensionError, NotPositiveDefinite, RankDeficient
from .numerics import cholesky, solve_with_factor

PRECOMPUTED = "precomputed"
PER_INPUT = "per_input"


@dataclass(frozen=True, eq=False)
class EqualityProjector:
    mode: str
    n: int
    k: int
    G: np.ndarray | None = None  # (m_eq, n), precomputed mode
    g_map: np.ndarray | None = None  # (m_eq, k)
    Gbar: np.ndarray | None = None  # (n, m_eq), precomputed mode
    templates: np.ndarray | None = None  # (m_eq, k, n), per-input mode

    @property
    def m_eq(self) -> int:
        return self.g_map.shape[0]

    def G_at(self, x) -> np.ndarray:
        if self.mode == PRECOMPUTED:
            return self.G
        return np.einsum("j,ljn->ln", x, self.templates)

    def Gbar_at(self, x) -> np.ndarray:
        """``G(x)^T (G(x) G(x)^T)^{-1}`` at one input."""
        if self.mode == PRECOMPUTED:
            return self.Gbar
        G = self.G_at(x)
        try:
            f = cholesky(G @ G.T)
        except NotPositiveDefinite as exc:
            raise RankDeficient("G(x) G(x)^T is singular", x=np.array(x)) from exc
        return solve_with_factor(f, G).T

    def project(self, x, y_hat) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        y_hat = np.asarray(y_hat, dtype=np.float64)
        if x.shape != (self.k,) or y_hat.shape != (self.n,):
            raise DimensionError(f"expected x of length {self.k} and y_hat of length {self.n}")
        g = self.g_map @ x
        if self.mode == PRECOMPUTED:
            y = y_hat - self.Gbar @ (self.G @ y_hat - g)
            return y - self.Gbar @ (self.G @ y - g)
        G = self.G_at(x)
        try:
            f = cholesky(G @ G.T)
        except NotPositiveDefinite as exc:
            raise RankDeficient("G(x) G(x)^T is singular", x=x.copy()) from exc
        y = y_hat - G.T @ solve_with_factor(f, G @ y_hat - g)
        return y - G.T @ solve_with_factor(f, G @ y - g)

    def project_batch(self, X, Y_hat) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        Y_hat = np.asarray(Y_hat, dtype=np.float64)
        g = X @ self.g_map.T
        if self.mode == PRECOMPUTED:
            Y = Y_hat - (Y_hat @ self.G.T - g) @ self.Gbar.T
            return Y - (Y @ self.G.T - g) @ self.Gbar.T
        G = np.einsum("bj,ljn->bln", X, self.templates)
        gram = G @ G.transpose(0, 2, 1)
        Y = Y_hat
        for _ in range(2):
            resid = np.einsum("bln,bn->bl", G, Y) - g
            try:
                lam = np.linalg.solve(gram, resid[..., None])[..., 0]
            except np.linalg.LinAlgError as exc:
                raise RankDeficient("G(x) G(x)^T is singular for some input in the batch") from exc
            Y = Y - np.einsum("bln,bl->bn", G, lam)
        return Y

    def nullspace_apply(self, X, D) -> np.ndarray:
        """Apply ``(I - Gbar(x) G(x))^2`` row-wise, the Jacobian of the refined projection.

        The operator is symmetric, so the same call serves forward and backward.
        """
        X = np.asarray(X, dtype=np.float64)
        D = np.asarray(D, dtype=np.float64)
        if self.mode == PRECOMPUTED:
            for _ in range(2):
                D = D - (D @ self.G.T) @ self.Gbar.T
            return D
        G = np.einsum("bj,ljn->bln", X, self.templates)
        gram = G @ G.transpose(0, 2, 1)
        for _ in range(2):
            lam = np.linalg.solve(gram, np.einsum("bln,bn->bl", G, D)[..., None])[..., 0]
            D = D - np.einsum("bln,bl->bn", G, lam)
        return D


def build_projector(cs: ConstraintSystem, samples=None, force_per_input: bool = False) -> EqualityProjector:
    """Build the projector for the equality rows of ``cs``.

    ``samples`` (a ``(N, k)`` array) is used to check full row rank of
    ``G(x)`` when the equality rows depend on the input.
    """
    if cs.m_eq < 1:
        raise ValueError("build_projector needs at least one equality row")
    g_map = np.array(cs.rhs_B[: cs.m_eq])
    if cs.eq_lhs_input_independent and not force_per_input:
        G = np.array(cs.templates[: cs.m_eq, 0, :])
        try:
            f = cholesky(G @ G.T)
        except NotPositiveDefinite as exc:
            raise RankDeficient("equality rows are linearly dependent") from exc
        Gbar = solve_with_factor(f, G).T
        return EqualityProjector(PRECOMPUTED, cs.n, cs.k, G=G, g_map=g_map, Gbar=Gbar)
    proj = EqualityProjector(PER_INPUT, cs.n, cs.k, g_map=g_map, templates=np.array(cs.templates[: cs.m_eq]))
    if samples is not None:
        for x in np.atleast_2d(samples):
            G = proj.G_at(x)
            try:
                cholesky(G @ G.T)
            except NotPositiveDefinite as exc:
                raise RankDeficient("equality rows lose rank at a sampled input", x=np.array(x)) from exc
    return proj


def project(proj: EqualityProjector, x, y_hat) -> np.ndarray:
    return proj.project(x, y_hat)
