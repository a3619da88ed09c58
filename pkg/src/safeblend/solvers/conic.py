"""Primal-dual interior-point method for small dense cone programs.

Solves::

    minimize    c^T x
    subject to  G x + s = h,   A x = b,   s in K

with ``K`` a product of a non-negative orthant and positive semidefinite
cones.  Semidefinite blocks are stored in ``svec`` form (lower triangle,
off-diagonals scaled by sqrt(2)) so that dot products equal trace inner
products.  The iteration runs on the homogeneous self-dual embedding with
Nesterov-Todd scaling and a Mehrotra predictor-corrector step, which yields
certificates of infeasibility when the problem has no solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from ..errors import IterationLimit, NumericalFailure

SQRT2 = np.sqrt(2.0)


# ---------------------------------------------------------------------------
# svec helpers
# ---------------------------------------------------------------------------

_TRIL_CACHE: dict[int, tuple] = {}


def _tril(d):
    if d not in _TRIL_CACHE:
        r, c = np.tril_indices(d)
        scale = np.where(r == c, 1.0, SQRT2)
        _TRIL_CACHE[d] = (r, c, scale)
    return _TRIL_CACHE[d]


def svec(M: np.ndarray) -> np.ndarray:
    """Works on a single matrix or a stack ``(..., d, d)``."""
    d = M.shape[-1]
    r, c, scale = _tril(d)
    return M[..., r, c] * scale


def smat(v: np.ndarray, d: int) -> np.ndarray:
    r, c, scale = _tril(d)
    out = np.zeros(v.shape[:-1] + (d, d))
    vals = v / scale
    out[..., r, c] = vals
    out[..., c, r] = vals
    return out


def svec_size(d: int) -> int:
    return d * (d + 1) // 2


@dataclass(frozen=True)
class ConeDims:
    l: int = 0  # noqa: E741
    s: tuple = ()

    @property
    def size(self) -> int:
        return self.l + sum(svec_size(d) for d in self.s)

    @property
    def degree(self) -> int:
        return self.l + sum(self.s)

    def blocks(self):
        """Yield (start, stop, d) for each semidefinite block."""
        off = self.l
        for d in self.s:
            n = svec_size(d)
            yield off, off + n, d
            off += n


@dataclass
class ConeSolution:
    status: str  # "optimal" | "primal_infeasible" | "dual_infeasible"
    x: np.ndarray
    s: np.ndarray
    y: np.ndarray
    z: np.ndarray
    primal_objective: float
    dual_objective: float
    iterations: int
    gap: float
    primal_residual: float
    dual_residual: float
    info: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# cone arithmetic
# ---------------------------------------------------------------------------


def _identity(dims: ConeDims) -> np.ndarray:
    e = np.zeros(dims.size)
    e[: dims.l] = 1.0
    for a, b, d in dims.blocks():
        e[a:b] = svec(np.eye(d))
    return e


def _min_eig(v, dims):
    """Smallest 'eigenvalue' of a cone vector (min over all blocks)."""
    vals = []
    if dims.l:
        vals.append(np.min(v[: dims.l]))
    for a, b, d in dims.blocks():
        vals.append(np.linalg.eigvalsh(smat(v[a:b], d))[0])
    return min(vals) if vals else np.inf


class _Scaling:
    """Nesterov-Todd scaling point for the current (s, z)."""

    def __init__(self, s, z, dims: ConeDims):
        self.dims = dims
        l = dims.l  # noqa: E741
        self.d = np.sqrt(s[:l] / z[:l])
        lam = [np.sqrt(s[:l] * z[:l])]
        self.R = []
        self.Rinv = []
        for a, b, d in dims.blocks():
            S = smat(s[a:b], d)
            Z = smat(z[a:b], d)
            try:
                Ls = np.linalg.cholesky(S)
                Lz = np.linalg.cholesky(Z)
            except np.linalg.LinAlgError as exc:
                raise NumericalFailure("iterate left the semidefinite cone") from exc
            U, sv, Vt = np.linalg.svd(Lz.T @ Ls)
            isq = 1.0 / np.sqrt(sv)
            R = Ls @ Vt.T * isq[None, :]
            Rinv = (np.sqrt(sv)[:, None] * Vt) @ sla.solve_triangular(Ls, np.eye(d), lower=True)
            self.R.append(R)
            self.Rinv.append(Rinv)
            lam.append(sv)
        self.lam_parts = lam
        # lambda as a cone vector (diagonal matrices for semidefinite blocks)
        lv = np.zeros(dims.size)
        lv[:l] = lam[0]
        for (a, b, d), sv in zip(dims.blocks(), lam[1:]):
            lv[a:b] = svec(np.diag(sv))
        self.lam = lv

    # W z-like ; W^{-T} s-like ; W^T ; W^{-1}
    def W(self, v):
        out = np.empty_like(v)
        l = self.dims.l  # noqa: E741
        out[:l] = v[:l] * self.d
        for (a, b, d), R in zip(self.dims.blocks(), self.R):
            out[a:b] = svec(R.T @ smat(v[a:b], d) @ R)
        return out

    def Winv_T(self, v):
        out = np.empty_like(v)
        l = self.dims.l  # noqa: E741
        out[:l] = v[:l] / self.d
        for (a, b, d), Ri in zip(self.dims.blocks(), self.Rinv):
            out[a:b] = svec(Ri @ smat(v[a:b], d) @ Ri.T)
        return out

    def W_T(self, v):
        out = np.empty_like(v)
        l = self.dims.l  # noqa: E741
        out[:l] = v[:l] * self.d
        for (a, b, d), R in zip(self.dims.blocks(), self.R):
            out[a:b] = svec(R @ smat(v[a:b], d) @ R.T)
        return out

    def Winv(self, v):
        out = np.empty_like(v)
        l = self.dims.l  # noqa: E741
        out[:l] = v[:l] / self.d
        for (a, b, d), Ri in zip(self.dims.blocks(), self.Rinv):
            out[a:b] = svec(Ri.T @ smat(v[a:b], d) @ Ri)
        return out

    def scale_rows(self, G):
        """``W^{-T} G`` column by column (dense result)."""
        l = self.dims.l  # noqa: E741
        blocks = []
        if l:
            Gl = G[:l]
            if sp.issparse(Gl):
                blocks.append(sp.diags(1.0 / self.d) @ Gl)
            else:
                blocks.append(Gl / self.d[:, None])
        for (a, b, d), Ri in zip(self.dims.blocks(), self.Rinv):
            Gb = G[a:b]
            Gb = Gb.toarray() if sp.issparse(Gb) else np.asarray(Gb)
            mats = smat(Gb.T, d)  # (nx, d, d)
            blocks.append(sp.csr_matrix(svec(Ri @ mats @ Ri.T).T) if sp.issparse(G) else svec(Ri @ mats @ Ri.T).T)
        if sp.issparse(G):
            return sp.vstack(blocks).tocsr()
        return np.vstack(blocks) if blocks else np.zeros((0, G.shape[1]))


def _jordan(u, v, dims):
    out = np.empty_like(u)
    l = dims.l  # noqa: E741
    out[:l] = u[:l] * v[:l]
    for a, b, d in dims.blocks():
        U = smat(u[a:b], d)
        V = smat(v[a:b], d)
        out[a:b] = svec(0.5 * (U @ V + V @ U))
    return out


def _lam_div(scaling: _Scaling, r, dims):
    """Solve ``lam o u = r`` for u (lam diagonal in every block)."""
    out = np.empty_like(r)
    l = dims.l  # noqa: E741
    out[:l] = r[:l] / scaling.lam_parts[0]
    for (a, b, d), lam in zip(dims.blocks(), scaling.lam_parts[1:]):
        Rm = smat(r[a:b], d)
        out[a:b] = svec(2.0 * Rm / (lam[:, None] + lam[None, :]))
    return out


def _max_step(scaling: _Scaling, dv, dims):
    """Largest alpha with lam + alpha*dv in the cone (inf if unrestricted)."""
    alpha = np.inf
    l = dims.l  # noqa: E741
    if l:
        lam = scaling.lam_parts[0]
        neg = dv[:l] < 0
        if np.any(neg):
            alpha = min(alpha, float(np.min(-lam[neg] / dv[:l][neg])))
    for (a, b, d), lam in zip(dims.blocks(), scaling.lam_parts[1:]):
        isq = 1.0 / np.sqrt(lam)
        M = smat(dv[a:b], d) * isq[:, None] * isq[None, :]
        w = np.linalg.eigvalsh(M)[0]
        if w < 0:
            alpha = min(alpha, -1.0 / w)
    return alpha


# ---------------------------------------------------------------------------
# linear algebra for the Newton systems
# ---------------------------------------------------------------------------


def _dense(M):
    return M.toarray() if sp.issparse(M) else np.asarray(M)


class _KKT:
    """Factorisation of  [[0, A^T, G^T], [A, 0, 0], [G, 0, -W^T W]]."""

    def __init__(self, G, A, scaling: _Scaling | None, dims: ConeDims):
        self.G, self.A, self.scaling, self.dims = G, A, scaling, dims
        nx = G.shape[1]
        Gs = G if scaling is None else scaling.scale_rows(G)
        self.Gs = Gs
        H = _dense(Gs.T @ Gs)
        if A.shape[0]:
            H = H + _dense(A.T @ A)
        self.K = H
        self.reg = 0.0
        self.Kf = self._factor(H, nx)
        if A.shape[0]:
            At = _dense(A.T)
            KiAt = sla.cho_solve(self.Kf, At, check_finite=False)
            S = _dense(A @ KiAt)
            S = 0.5 * (S + S.T)
            self.KiAt = KiAt
            self.Sf = self._factor(S, S.shape[0])
        else:
            self.KiAt = None
            self.Sf = None

    def _factor(self, M, n):
        scale = max(1.0, float(np.max(np.abs(np.diag(M))))) if n else 1.0
        for reg in (0.0, 1e-14, 1e-12, 1e-10, 1e-8):
            try:
                return sla.cho_factor(M + reg * scale * np.eye(n), lower=True, check_finite=False)
            except (np.linalg.LinAlgError, ValueError):
                continue
        raise NumericalFailure("KKT factorisation broke down")

    def _apply_WtW_inv(self, v):
        if self.scaling is None:
            return v
        return self.scaling.Winv(self.scaling.Winv_T(v))

    def _apply_WtW(self, v):
        if self.scaling is None:
            return v
        return self.scaling.W_T(self.scaling.W(v))

    def _solve_once(self, bx, by, bz):
        A = self.A
        wbz = bz if self.scaling is None else self.scaling.Winv_T(bz)
        r = bx + self.Gs.T @ wbz
        if A.shape[0]:
            r = r + A.T @ by
            uy = sla.cho_solve(self.Sf, self.KiAt.T @ r - by, check_finite=False)
            ux = sla.cho_solve(self.Kf, r - A.T @ uy, check_finite=False)
        else:
            uy = np.zeros(0)
            ux = sla.cho_solve(self.Kf, r, check_finite=False)
        uz = self._apply_WtW_inv(self.G @ ux - bz)
        return ux, uy, uz

    def solve(self, bx, by, bz, refine=2):
        ux, uy, uz = self._solve_once(bx, by, bz)
        for _ in range(refine):
            rx = bx - (self.A.T @ uy + self.G.T @ uz)
            ry = by - self.A @ ux
            rz = bz - (self.G @ ux - self._apply_WtW(uz))
            ex, ey, ez = self._solve_once(rx, ry, rz)
            ux, uy, uz = ux + ex, uy + ey, uz + ez
        return ux, uy, uz


def _independent_rows(A, b, tol=1e-10):
    """Drop linearly dependent equality rows; flag inconsistency."""
    if A.shape[0] == 0:
        return A, b, np.arange(0), True
    Ad = _dense(A)
    _, R, piv = sla.qr(Ad.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0:
        return A[:0], b[:0], np.arange(0), not np.any(b)
    rank = int(np.sum(diag > tol * max(1.0, diag[0])))
    keep = np.sort(piv[:rank])
    if rank == A.shape[0]:
        return A, b, keep, True
    Ak, bk = Ad[keep], b[keep]
    sol, *_ = np.linalg.lstsq(Ak, bk, rcond=None)
    consistent = np.linalg.norm(Ad @ sol - b) <= 1e-8 * max(1.0, np.linalg.norm(b))
    Aout = sp.csr_matrix(Ak) if sp.issparse(A) else Ak
    return Aout, bk, keep, consistent


# ---------------------------------------------------------------------------
# main loop
# ---------------------------------------------------------------------------


def conelp(
    c,
    G,
    h,
    dims: ConeDims,
    A=None,
    b=None,
    *,
    feastol: float = 1e-9,
    reltol: float = 1e-9,
    abstol: float = 1e-10,
    max_iter: int = 200,
    step_fraction: float = 0.99,
) -> ConeSolution:
    c = np.asarray(c, dtype=np.float64)
    nx = c.shape[0]
    h = np.asarray(h, dtype=np.float64)
    if not sp.issparse(G):
        G = np.asarray(G, dtype=np.float64).reshape(h.shape[0], nx)
    if A is None:
        A = np.zeros((0, nx))
        b = np.zeros(0)
    if not sp.issparse(A):
        A = np.asarray(A, dtype=np.float64).reshape(-1, nx)
    b = np.asarray(b, dtype=np.float64)
    if G.shape != (dims.size, nx):
        raise ValueError(f"G has shape {G.shape}, expected {(dims.size, nx)}")
    m_eq_orig = A.shape[0]
    A, b, keep, consistent = _independent_rows(A, b)
    if not consistent:
        return ConeSolution("primal_infeasible", np.full(nx, np.nan), np.full(dims.size, np.nan),
                            np.full(m_eq_orig, np.nan), np.full(dims.size, np.nan),
                            np.nan, np.nan, 0, np.nan, np.inf, np.nan, {"reason": "inconsistent equalities"})

    e = _identity(dims)
    nu = dims.degree
    resx0 = max(1.0, np.linalg.norm(c))
    resy0 = max(1.0, np.linalg.norm(b))
    resz0 = max(1.0, np.linalg.norm(h))

    # initial point from two least-squares problems
    kkt = _KKT(G, A, None, dims)
    x, y, zz = kkt.solve(np.zeros(nx), b, h)
    s = -zz
    _, y, z = kkt.solve(-c, np.zeros(A.shape[0]), np.zeros(dims.size))
    nrms = np.linalg.norm(s)
    ts = -_min_eig(s, dims)
    if ts >= -1e-8 * max(nrms, 1.0):
        s = s + (1.0 + ts) * e
    nrmz = np.linalg.norm(z)
    tz = -_min_eig(z, dims)
    if tz >= -1e-8 * max(nrmz, 1.0):
        z = z + (1.0 + tz) * e
    tau, kappa = 1.0, 1.0

    def finish(status, it, extra=None):
        y_full = np.zeros(m_eq_orig)
        y_full[keep] = y / (tau if status == "optimal" else 1.0)
        if status == "optimal":
            xs, ss, zs = x / tau, s / tau, z / tau
        else:
            xs, ss, zs = x, s, z
        pcost = float(c @ x / tau)
        dcost = float(-(b @ y + h @ z) / tau)
        return ConeSolution(status, xs, ss, y_full, zs, pcost, dcost, it, gap, pres, dres, extra or {})

    gap = pres = dres = np.inf
    for it in range(max_iter + 1):
        rx = A.T @ y + G.T @ z + c * tau
        ry = A @ x - b * tau
        rz = s + G @ x - h * tau
        rt = kappa + c @ x + b @ y + h @ z
        mu = (s @ z + tau * kappa) / (nu + 1)
        pcost = c @ x / tau
        dcost = -(b @ y + h @ z) / tau
        gap = (s @ z) / tau**2
        if pcost < 0:
            relgap = gap / -pcost
        elif dcost > 0:
            relgap = gap / dcost
        else:
            relgap = np.inf
        pres = max(np.linalg.norm(ry) / tau / resy0, np.linalg.norm(rz) / tau / resz0)
        dres = np.linalg.norm(rx) / tau / resx0
        hz_by = h @ z + b @ y
        pinfres = np.linalg.norm(A.T @ y + G.T @ z) / resx0 / -hz_by if hz_by < 0 else np.inf
        cx = c @ x
        dinfres = (max(np.linalg.norm(A @ x) / resy0, np.linalg.norm(s + G @ x) / resz0) / -cx
                   if cx < 0 else np.inf)

        if pres <= feastol and dres <= feastol and (gap <= abstol or relgap <= reltol):
            return finish("optimal", it)
        if pinfres <= feastol:
            return finish("primal_infeasible", it, {"certificate": "dual ray"})
        if dinfres <= feastol:
            return finish("dual_infeasible", it, {"certificate": "primal ray"})
        if it == max_iter:
            break

        try:
            W = _Scaling(s, z, dims)
            kkt = _KKT(G, A, W, dims)
        except NumericalFailure:
            raise
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericalFailure(str(exc)) from exc
        lam = W.lam
        x1, y1, z1 = kkt.solve(-c, b, h)
        denom = c @ x1 + b @ y1 + h @ z1 - kappa / tau

        def direction(eta, rc, rk):
            q = _lam_div(W, rc, dims)
            x2, y2, z2 = kkt.solve(-eta * rx, -eta * ry, -eta * rz - W.W_T(q))
            dtau = (-eta * rt - rk / tau - (c @ x2 + b @ y2 + h @ z2)) / denom
            dx = x2 + dtau * x1
            dy = y2 + dtau * y1
            dz = z2 + dtau * z1
            dzw = W.W(dz)
            dsw = q - dzw
            dkappa = (rk - kappa * dtau) / tau
            return dx, dy, dz, dsw, dzw, dtau, dkappa

        def step_to_boundary(dsw, dzw, dtau, dkappa):
            a = min(_max_step(W, dsw, dims), _max_step(W, dzw, dims))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        # predictor
        lam_sq = _jordan(lam, lam, dims)
        aff = direction(1.0, -lam_sq, -tau * kappa)
        a_aff = min(1.0, step_to_boundary(*aff[3:]))
        sigma = min(1.0, max(0.0, 1.0 - a_aff)) ** 3
        # corrector
        rc = -lam_sq - _jordan(aff[3], aff[4], dims) + sigma * mu * e
        rk = -tau * kappa - aff[5] * aff[6] + sigma * mu
        dx, dy, dz, dsw, dzw, dtau, dkappa = direction(1.0 - sigma, rc, rk)
        alpha = min(1.0, step_fraction * step_to_boundary(dsw, dzw, dtau, dkappa))

        ds = W.W_T(dsw)
        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa
        # the embedding is homogeneous, so rescaling keeps diverging rays finite
        big = max(np.max(np.abs(x), initial=0.0), np.max(np.abs(s), initial=0.0),
                  np.max(np.abs(z), initial=0.0), np.max(np.abs(y), initial=0.0), tau, kappa)
        if big > 1e6:
            x, y, z, s, tau, kappa = x / big, y / big, z / big, s / big, tau / big, kappa / big
        if not (np.all(np.isfinite(x)) and np.isfinite(tau)):
            raise NumericalFailure("iterates became non-finite")

    exc = IterationLimit(f"no convergence after {max_iter} iterations (pres={pres:.2e}, dres={dres:.2e}, gap={gap:.2e})")
    exc.partial = finish("iteration_limit", max_iter)
    raise exc
