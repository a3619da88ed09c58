"""Hot inner loops, each in two flavours.

``*_loops`` functions are scalar-loop code compiled with numba; ``*_numpy``
functions are the vectorised fallback.  The public names at the bottom pick one
according to :mod:`safeblend._accel`.  Both flavours implement the same
arithmetic so results agree to rounding.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, jit

# ---------------------------------------------------------------------------
# cyclic Jacobi eigenvalue iteration
# ---------------------------------------------------------------------------


def _jacobi_loops(a, tol, max_sweeps):
    n = a.shape[0]
    A = a.copy()
    V = np.eye(n)
    frob2 = 0.0
    for i in range(n):
        for j in range(n):
            frob2 += A[i, j] * A[i, j]
    converged = False
    for _ in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    off += A[i, j] * A[i, j]
        if off <= tol * tol * frob2 or off == 0.0:
            converged = True
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                sgn = 1.0 if theta >= 0.0 else -1.0
                t = sgn / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = A[k, p]
                    akq = A[k, q]
                    A[k, p] = c * akp - s * akq
                    A[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = A[p, k]
                    aqk = A[q, k]
                    A[p, k] = c * apk - s * aqk
                    A[q, k] = s * apk + c * aqk
                for k in range(n):
                    vkp = V[k, p]
                    vkq = V[k, q]
                    V[k, p] = c * vkp - s * vkq
                    V[k, q] = s * vkp + c * vkq
    w = np.empty(n)
    for i in range(n):
        w[i] = A[i, i]
    return w, V, converged


def _jacobi_numpy(a, tol, max_sweeps):
    n = a.shape[0]
    A = np.array(a, dtype=np.float64, copy=True)
    V = np.eye(n)
    frob2 = float(np.sum(A * A))
    converged = False
    for _ in range(max_sweeps):
        D = A - np.diag(np.diag(A))  # summed directly: sum(A^2) - sum(diag^2) cancels near convergence
        off = float(np.sum(D * D))
        if off <= tol * tol * frob2 or off == 0.0:
            converged = True
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                sgn = 1.0 if theta >= 0.0 else -1.0
                t = sgn / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                cp, cq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * cp - s * cq
                A[:, q] = s * cp + c * cq
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    return np.diag(A).copy(), V, converged


# ---------------------------------------------------------------------------
# Cholesky with an explicit pivot threshold
# ---------------------------------------------------------------------------


def _cholesky_loops(a, threshold):
    """Returns (L, j) where j is the failing column, or -1 on success."""
    n = a.shape[0]
    L = np.zeros((n, n))
    for j in range(n):
        d = a[j, j]
        for k in range(j):
            d -= L[j, k] * L[j, k]
        if not d > threshold:
            return L, j
        ljj = math.sqrt(d)
        L[j, j] = ljj
        for i in range(j + 1, n):
            s = a[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / ljj
    return L, -1


def _cholesky_numpy(a, threshold):
    n = a.shape[0]
    L = np.zeros((n, n))
    for j in range(n):
        row = L[j, :j]
        d = a[j, j] - row @ row
        if not d > threshold:
            return L, j
        ljj = math.sqrt(d)
        L[j, j] = ljj
        if j + 1 < n:
            L[j + 1 :, j] = (a[j + 1 :, j] - L[j + 1 :, :j] @ row) / ljj
    return L, -1


# ---------------------------------------------------------------------------
# alternating projections
# ---------------------------------------------------------------------------


def _apm_loops(y0, G, Gbar, g, H, h, tol, max_iter, geq_scale, hin_scale):
    n = y0.shape[0]
    m_eq = G.shape[0]
    m_in = H.shape[0]
    y = y0.copy()
    hist = np.full(max_iter, np.nan)
    row_sq = np.empty(m_in)
    for i in range(m_in):
        acc = 0.0
        for j in range(n):
            acc += H[i, j] * H[i, j]
        row_sq[i] = acc
    r = np.empty(m_eq)
    for it in range(1, max_iter + 1):
        eq2 = 0.0
        for i in range(m_eq):
            acc = -g[i]
            for j in range(n):
                acc += G[i, j] * y[j]
            eq2 += acc * acc
        in2 = 0.0
        for i in range(m_in):
            acc = -h[i]
            for j in range(n):
                acc += H[i, j] * y[j]
            if acc > 0.0:
                in2 += acc * acc
        viol = math.sqrt(eq2 / (geq_scale * geq_scale) + in2 / (hin_scale * hin_scale))
        hist[it - 1] = viol
        if viol <= tol or it == max_iter:
            return y, it, hist
        # equality projection  y <- y - Gbar (G y - g)
        for i in range(m_eq):
            acc = -g[i]
            for j in range(n):
                acc += G[i, j] * y[j]
            r[i] = acc
        for j in range(n):
            acc = 0.0
            for i in range(m_eq):
                acc += Gbar[j, i] * r[i]
            y[j] -= acc
        # cyclic halfspace projections
        for i in range(m_in):
            acc = -h[i]
            for j in range(n):
                acc += H[i, j] * y[j]
            if acc > 0.0 and row_sq[i] > 0.0:
                step = acc / row_sq[i]
                for j in range(n):
                    y[j] -= step * H[i, j]
    return y, max_iter, hist


def _apm_numpy(y0, G, Gbar, g, H, h, tol, max_iter, geq_scale, hin_scale):
    y = y0.copy()
    hist = np.full(max_iter, np.nan)
    row_sq = np.einsum("ij,ij->i", H, H)
    for it in range(1, max_iter + 1):
        eq = G @ y - g
        pos = np.maximum(H @ y - h, 0.0)
        viol = math.sqrt(float(eq @ eq) / geq_scale**2 + float(pos @ pos) / hin_scale**2)
        hist[it - 1] = viol
        if viol <= tol or it == max_iter:
            return y, it, hist
        y -= Gbar @ (G @ y - g)
        for i in range(H.shape[0]):
            excess = H[i] @ y - h[i]
            if excess > 0.0 and row_sq[i] > 0.0:
                y -= (excess / row_sq[i]) * H[i]
    return y, max_iter, hist


# ---------------------------------------------------------------------------
# nullspace-projected momentum descent on inequality violation
# ---------------------------------------------------------------------------


def _dc3_loops(y0, G, Gbar, g, H, h, lr, momentum, tol, max_iter, geq_scale, hin_scale):
    n = y0.shape[0]
    m_eq = G.shape[0]
    m_in = H.shape[0]
    y = y0.copy()
    v = np.zeros(n)
    grad = np.empty(n)
    pos = np.empty(m_in)
    w = np.empty(m_eq)
    eq_hist = np.full(max_iter, np.nan)
    for it in range(1, max_iter + 1):
        eq2 = 0.0
        for i in range(m_eq):
            acc = -g[i]
            for j in range(n):
                acc += G[i, j] * y[j]
            eq2 += acc * acc
        in2 = 0.0
        for i in range(m_in):
            acc = -h[i]
            for j in range(n):
                acc += H[i, j] * y[j]
            pos[i] = acc if acc > 0.0 else 0.0
            in2 += pos[i] * pos[i]
        eq_hist[it - 1] = math.sqrt(eq2) / geq_scale
        viol = math.sqrt(eq2 / (geq_scale * geq_scale) + in2 / (hin_scale * hin_scale))
        if viol <= tol or it == max_iter:
            return y, it, eq_hist
        for j in range(n):
            acc = 0.0
            for i in range(m_in):
                acc += H[i, j] * pos[i]
            grad[j] = acc
        for i in range(m_eq):
            acc = 0.0
            for j in range(n):
                acc += G[i, j] * grad[j]
            w[i] = acc
        for j in range(n):
            acc = grad[j]
            for i in range(m_eq):
                acc -= Gbar[j, i] * w[i]
            v[j] = momentum * v[j] - lr * acc
            y[j] += v[j]
    return y, max_iter, eq_hist


def _dc3_numpy(y0, G, Gbar, g, H, h, lr, momentum, tol, max_iter, geq_scale, hin_scale):
    y = y0.copy()
    v = np.zeros_like(y)
    eq_hist = np.full(max_iter, np.nan)
    for it in range(1, max_iter + 1):
        eq = G @ y - g
        pos = np.maximum(H @ y - h, 0.0)
        eq_hist[it - 1] = math.sqrt(float(eq @ eq)) / geq_scale
        viol = math.sqrt(float(eq @ eq) / geq_scale**2 + float(pos @ pos) / hin_scale**2)
        if viol <= tol or it == max_iter:
            return y, it, eq_hist
        grad = H.T @ pos
        grad = grad - Gbar @ (G @ grad)
        v = momentum * v - lr * grad
        y = y + v
    return y, max_iter, eq_hist


# ---------------------------------------------------------------------------
# blending coefficient over a batch
# ---------------------------------------------------------------------------


def _alpha_loops(s_tn, s_sn):
    B, m = s_tn.shape
    alpha = np.zeros(B)
    arg = np.full(B, -1, dtype=np.int64)
    for b in range(B):
        best = -1.0
        for i in range(m):
            st = s_tn[b, i]
            if st < 0.0:
                ratio = -st / (s_sn[b, i] - st)
                if ratio > best:
                    best = ratio
                    arg[b] = i
        if arg[b] >= 0:
            alpha[b] = min(max(best, 0.0), 1.0)
    return alpha, arg


def _alpha_numpy(s_tn, s_sn):
    active = s_tn < 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(active, -s_tn / (s_sn - s_tn), -1.0)
    if ratio.shape[1] == 0:
        return np.zeros(ratio.shape[0]), np.full(ratio.shape[0], -1, dtype=np.int64)
    arg = np.argmax(ratio, axis=1).astype(np.int64)
    best = ratio[np.arange(ratio.shape[0]), arg]
    has = active.any(axis=1)
    arg[~has] = -1
    alpha = np.where(has, np.clip(best, 0.0, 1.0), 0.0)
    return alpha, arg


jacobi_numba = jit(_jacobi_loops)
cholesky_numba = jit(_cholesky_loops)
apm_numba = jit(_apm_loops)
dc3_numba = jit(_dc3_loops)
alpha_numba = jit(_alpha_loops)

jacobi_numpy = _jacobi_numpy
cholesky_numpy = _cholesky_numpy
apm_numpy = _apm_numpy
dc3_numpy = _dc3_numpy
alpha_numpy = _alpha_numpy

if USE_NUMBA:
    jacobi_kernel = jacobi_numba
    cholesky_kernel = cholesky_numba
    apm_kernel = apm_numba
    dc3_kernel = dc3_numba
    alpha_kernel = alpha_numba
else:
    jacobi_kernel = jacobi_numpy
    cholesky_kernel = cholesky_numpy
    apm_kernel = apm_numpy
    dc3_kernel = dc3_numpy
    alpha_kernel = alpha_numpy
