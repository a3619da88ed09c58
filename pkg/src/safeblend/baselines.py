"""Comparison methods: alternating projections, a DC3-style correction,
the soft-penalty loss used to train their task networks, and LDR-only
prediction.

Violation is measured as ``sqrt(eq^2 + ineq^2)`` where ``eq`` is the norm
of the equality residual and ``ineq`` the norm of the positive part of the
inequality excess, each divided by ``max(1, ||rhs||)`` of its block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .constraints import ConstraintSystem
from .projection import build_projector
from .tasknet import MlpParams, TrainConfig, backward, fit, forward


@dataclass(frozen=True)
class ApmConfig:
    tolerance: float = 1e-4
    max_iterations: int = 300

    def __post_init__(self):
        if self.tolerance <= 0 or self.max_iterations < 1:
            raise ValueError("APM tolerance and iteration cap must be positive")


@dataclass(frozen=True)
class Dc3Config:
    lr: float = 1e-4
    momentum: float = 0.5
    max_iterations: int = 300
    tolerance: float = 1e-4
    penalty: float = 5000.0

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.lr <= 0 or self.max_iterations < 1 or self.tolerance <= 0 or self.penalty < 0:
            raise ValueError("DC3 configuration values must be positive")


def split_at(cs: ConstraintSystem, x):
    """``(G, g, H, h)`` with ``G y = g`` and ``H y <= h`` at input ``x``."""
    x = np.asarray(x, dtype=np.float64)
    A = cs.lhs_at(x)
    b = cs.rhs_at(x)
    return A[: cs.m_eq], b[: cs.m_eq], A[cs.m_eq:], b[cs.m_eq:]


def _pinv_rows(G):
    if G.shape[0] == 0:
        return np.zeros((G.shape[1], 0))
    return np.linalg.solve(G @ G.T, G).T


def _scales(g, h):
    return max(1.0, float(np.linalg.norm(g))), max(1.0, float(np.linalg.norm(h)))


def violation(cs: ConstraintSystem, x, y) -> float:
    G, g, H, h = split_at(cs, x)
    sg, sh = _scales(g, h)
    eq = np.linalg.norm(G @ y - g) / sg
    ineq = np.linalg.norm(np.maximum(H @ y - h, 0.0)) / sh
    return float(np.hypot(eq, ineq))


def apm_correct(cs: ConstraintSystem, x, y_hat, cfg: ApmConfig = ApmConfig(), return_history: bool = False):
    """One iteration is a violation check followed (if needed) by one sweep:
    equality projection, then each violated halfspace in index order."""
    G, g, H, h = split_at(cs, x)
    sg, sh = _scales(g, h)
    y, it, hist = _kernels.apm_kernel(
        np.asarray(y_hat, dtype=np.float64).copy(), np.ascontiguousarray(G), np.ascontiguousarray(_pinv_rows(G)),
        g, np.ascontiguousarray(H), h, cfg.tolerance, cfg.max_iterations, sg, sh)
    if return_history:
        return y, int(it), hist[:it]
    return y, int(it)


def dc3_correct(cs: ConstraintSystem, x, y_hat, cfg: Dc3Config = Dc3Config(), return_history: bool = False):
    """Equality completion by projection, then momentum descent on
    ``0.5 * ||max(H y - h, 0)||^2`` with steps kept in the nullspace of ``G``."""
    G, g, H, h = split_at(cs, x)
    sg, sh = _scales(g, h)
    Gbar = _pinv_rows(G)
    y0 = np.asarray(y_hat, dtype=np.float64).copy()
    if G.shape[0]:
        y0 = y0 - Gbar @ (G @ y0 - g)
    y, it, eq_hist = _kernels.dc3_kernel(
        y0, np.ascontiguousarray(G), np.ascontiguousarray(Gbar), g, np.ascontiguousarray(H), h,
        cfg.lr, cfg.momentum, cfg.tolerance, cfg.max_iterations, sg, sh)
    if return_history:
        return y, int(it), eq_hist[:it]
    return y, int(it)


def soft_loss(cs: ConstraintSystem, x, y, c, penalty: float) -> float:
    r = cs.slack(x, y)
    viol = np.maximum(-r.ineq_slack, 0.0)
    return float(np.dot(c, y) + penalty * (r.eq_residual @ r.eq_residual + viol @ viol))


def soft_loss_batch(cs: ConstraintSystem, X, Y, c, penalty: float):
    """Mean soft loss over a batch and its gradient with respect to ``Y``."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    eq, ineq = cs.slack_batch(X, Y)
    viol = np.maximum(-ineq, 0.0)
    B = X.shape[0]
    loss = float(np.mean(Y @ c + penalty * (np.sum(eq**2, axis=1) + np.sum(viol**2, axis=1))))
    lhs = cs.lhs_batch(X)
    # d eq / dY = A_eq ; d(-ineq)/dY = A_ineq
    r = np.concatenate([eq, viol], axis=1)
    grad = (np.asarray(c)[None, :] + 2.0 * penalty * np.einsum("bl,bln->bn", r, lhs)) / B
    return loss, grad


def train_soft(params: MlpParams, cs: ConstraintSystem, X, c, penalty: float, cfg: TrainConfig) -> MlpParams:
    """Train a plain task network on the soft-penalty loss."""
    X = np.asarray(X, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)

    def grad_fn(p, idx):
        Y, cache = forward(p, X[idx])
        _, dY = soft_loss_batch(cs, X[idx], Y, c, penalty)
        return backward(p, cache, dY)

    return fit(params, X, grad_fn, cfg.epochs, cfg.lr, cfg.batch_size, cfg.seed + 2)


def ldr_predict(rule, X):
    return np.atleast_2d(np.asarray(X, dtype=np.float64)) @ rule.F.T


__all__ = [
    "ApmConfig", "Dc3Config", "apm_correct", "dc3_correct", "soft_loss", "soft_loss_batch",
    "train_soft", "ldr_predict", "violation", "split_at", "build_projector",
]
