"""Task network, equality projection and safe-rule blending in one layer.

For an input ``x`` the task output is projected onto the equality subspace,
then pulled towards the certified rule ``F x`` just far enough to make every
inequality hold::

    alpha = max_{i : s_tn_i < 0}  -s_tn_i / (s_sn_i - s_tn_i)
    y     = (1 - alpha) * y_tn + alpha * F x

Only the task parameters are trained; ``F`` stays fixed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .constraints import ConstraintSystem, SlackVector
from .errors import DimensionError, SafeSlackDegenerate
from .projection import EqualityProjector, build_projector
from .safenet import LinearDecisionRule
from .tasknet import MlpParams, TrainConfig, backward, fit, forward, pretrain_to_safe


@dataclass(frozen=True, eq=False)
class ConstrainedModel:
    task: MlpParams
    projector: EqualityProjector | None
    rule: LinearDecisionRule
    system: ConstraintSystem

    def __post_init__(self):
        cs = self.system
        if not self.rule.t_star >= -1e-8:
            raise ValueError("safe rule must be certified (t_star >= 0) before blending")
        if (self.task.k, self.task.n) != (cs.k, cs.n) or (self.rule.k, self.rule.n) != (cs.k, cs.n):
            raise DimensionError("task network, rule and constraint system disagree on (k, n)")
        if (self.projector is None) != (cs.m_eq == 0):
            raise ValueError("a projector is needed exactly when there are equality rows")

    @classmethod
    def build(cls, task, rule, system, samples=None) -> "ConstrainedModel":
        proj = build_projector(system, samples) if system.m_eq else None
        return cls(task, proj, rule, system)

    def with_task(self, task: MlpParams) -> "ConstrainedModel":
        return ConstrainedModel(task, self.projector, self.rule, self.system)

    def __call__(self, X):
        return forward_constrained_batch(self, X)[0]


@dataclass(frozen=True)
class BlendTrace:
    alpha: float
    active_set: np.ndarray
    s_tn: SlackVector
    s_sn: SlackVector
    argmax: int = -1


@dataclass
class BatchTrace:
    alpha: np.ndarray
    argmax: np.ndarray
    y_tn: np.ndarray  # projected task output
    y_sn: np.ndarray
    s_tn: np.ndarray  # inequality slacks
    s_sn: np.ndarray
    cache: object = None


def blend_alpha(s_tn, s_sn):
    """Blending coefficient and binding row for batched inequality slacks."""
    s_tn = np.ascontiguousarray(np.atleast_2d(s_tn), dtype=np.float64)
    s_sn = np.ascontiguousarray(np.atleast_2d(s_sn), dtype=np.float64)
    return _kernels.alpha_kernel(s_tn, s_sn)


def _degenerate_threshold(t_star):
    return 0.5 * t_star if t_star > 2e-9 else -1e-9


def forward_constrained_batch(m: ConstrainedModel, X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    cs = m.system
    y_hat, cache = forward(m.task, X)
    y_tn = m.projector.project_batch(X, y_hat) if m.projector is not None else y_hat
    y_sn = X @ m.rule.F.T
    _, s_tn = cs.slack_batch(X, y_tn)
    _, s_sn = cs.slack_batch(X, y_sn)
    alpha, arg = blend_alpha(s_tn, s_sn)
    active = arg >= 0
    if np.any(active):
        low = np.any((s_tn < 0.0) & (s_sn < _degenerate_threshold(m.rule.t_star)), axis=1)
        if np.any(low):
            b = int(np.flatnonzero(low)[0])
            raise SafeSlackDegenerate(f"safe slack below t_star/2 on an active row for input {b}")
    Y = (1.0 - alpha)[:, None] * y_tn + alpha[:, None] * y_sn
    return Y, BatchTrace(alpha, arg, y_tn, y_sn, s_tn, s_sn, cache)


def forward_constrained(m: ConstrainedModel, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (m.system.k,):
        raise DimensionError(f"expected an input of length {m.system.k}")
    Y, tr = forward_constrained_batch(m, x[None, :])
    m_eq = m.system.m_eq
    eq_tn, _ = m.system.slack_batch(x[None], tr.y_tn[None, 0])
    eq_sn, _ = m.system.slack_batch(x[None], tr.y_sn[None, 0])
    trace = BlendTrace(
        float(tr.alpha[0]),
        np.flatnonzero(tr.s_tn[0] < 0.0) + m_eq,
        SlackVector(eq_tn[0], tr.s_tn[0]),
        SlackVector(eq_sn[0], tr.s_sn[0]),
        int(tr.argmax[0]) + m_eq if tr.argmax[0] >= 0 else -1,
    )
    return Y[0], trace


def output_grad(m: ConstrainedModel, X, trace: BatchTrace, dY) -> np.ndarray:
    """Map ``dL/dy`` to ``dL/d(raw task output)``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    dY = np.atleast_2d(np.asarray(dY, dtype=np.float64))
    alpha = trace.alpha
    D = (1.0 - alpha)[:, None] * dY
    rows = np.flatnonzero(trace.argmax >= 0)
    if rows.size:
        j = trace.argmax[rows] + m.system.m_eq
        lhs = m.system.lhs_batch(X[rows])  # (r, m, n)
        a_j = lhs[np.arange(rows.size), j]
        s = trace.s_tn[rows, trace.argmax[rows]]
        sig = trace.s_sn[rows, trace.argmax[rows]]
        dalpha = (sig / (sig - s) ** 2)[:, None] * a_j
        # the clamp to [0, 1] is flat outside the open interval
        inside = (alpha[rows] > 0.0) & (alpha[rows] < 1.0)
        dalpha[~inside] = 0.0
        coef = np.einsum("bn,bn->b", dY[rows], trace.y_sn[rows] - trace.y_tn[rows])
        D[rows] += coef[:, None] * dalpha
    if m.projector is not None:
        D = m.projector.nullspace_apply(X, D)
    return D


def backward_constrained(m: ConstrainedModel, X, dY, trace: BatchTrace | None = None) -> list:
    """Gradients for the task parameters of ``sum(dY * y)``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if trace is None:
        _, trace = forward_constrained_batch(m, X)
    D = output_grad(m, X, trace, dY)
    return backward(m.task, trace.cache, D)


def train_proposed(m: ConstrainedModel, X, cfg: TrainConfig, c=None, targets=None,
                   pretrain_samples=None) -> ConstrainedModel:
    """Pre-train to the safe rule, then train end to end.

    ``cfg.mode == "objective"`` minimises the mean of ``c^T y``;
    ``"supervised"`` minimises the mean squared error to ``targets``.
    """
    X = np.asarray(X, dtype=np.float64)
    task = m.task
    if cfg.pretrain_epochs:
        S = X if pretrain_samples is None else pretrain_samples
        task = pretrain_to_safe(task, m.rule, S, cfg.pretrain_epochs, cfg.lr, cfg.batch_size, cfg.seed)
    if cfg.mode == "objective":
        if c is None:
            raise ValueError("objective mode needs a cost vector")
        c = np.asarray(c, dtype=np.float64)
    elif targets is None:
        raise ValueError("supervised mode needs targets")
    else:
        targets = np.asarray(targets, dtype=np.float64)

    def grad_fn(task_p, idx):
        mm = m.with_task(task_p)
        Xb = X[idx]
        Y, tr = forward_constrained_batch(mm, Xb)
        if cfg.mode == "objective":
            dY = np.broadcast_to(c / Xb.shape[0], Y.shape)
        else:
            dY = 2.0 * (Y - targets[idx]) / Y.size
        return backward_constrained(mm, Xb, dY, tr)

    task = fit(task, X, grad_fn, cfg.epochs, cfg.lr, cfg.batch_size, cfg.seed + 1)
    return m.with_task(task)
