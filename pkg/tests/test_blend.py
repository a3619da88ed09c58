import numpy as np
import pytest

from builders import build_model, simplex_system
from safeblend.blend import (
    ConstrainedModel,
    backward_constrained,
    blend_alpha,
    forward_constrained,
    forward_constrained_batch,
    output_grad,
    train_proposed,
)
from safeblend.constraints import ConstraintSystem, sample
from safeblend.errors import DimensionError, SafeSlackDegenerate
from safeblend.safenet import LinearDecisionRule
from safeblend.tasknet import MlpParams, TrainConfig, init_mlp


def constant_net(k, value):
    """A net whose output is ``value`` for every input."""
    value = np.asarray(value, dtype=np.float64)
    return MlpParams((np.zeros((2, k)), np.zeros((value.size, 2))), (np.zeros(2), value))


def ratio_margin(tr, b):
    """Gap between the largest and second-largest blending ratios of input b."""
    s, sig = tr.s_tn[b], tr.s_sn[b]
    r = np.where(s < 0, -s / (sig - s), -np.inf)
    r = np.sort(r)[::-1]
    return r[0] - r[1] if r.size > 1 else np.inf


def test_blend_alpha_example():
    alpha, arg = blend_alpha([[-1.0, 2.0]], [[1.0, 3.0]])
    assert alpha[0] == pytest.approx(0.5)
    assert arg[0] == 0
    assert (1 - alpha[0]) * -1.0 + alpha[0] * 1.0 == pytest.approx(0.0, abs=1e-15)
    alpha, arg = blend_alpha([[-1.0, 2.0]], [[0.0, 3.0]])
    assert alpha[0] == 1.0
    alpha, arg = blend_alpha([[1.0, 2.0]], [[1.0, 3.0]])
    assert alpha[0] == 0.0 and arg[0] == -1


def test_blend_alpha_ties_lowest_index():
    alpha, arg = blend_alpha([[-1.0, -1.0, -2.0]], [[1.0, 1.0, 10.0]])
    assert arg[0] == 0 and alpha[0] == pytest.approx(0.5)


def test_feasible_task_output_passes_through_projection():
    cs, space = simplex_system()
    rule = LinearDecisionRule(np.array([[0.325, 0.28], [0.325, 0.24], [0.35, 0.48]]), 0.3, "lp")
    # y = (0.4, 0.3, 0.3) + xi (1/3, 1/3, 1/3) is feasible; give the net an off-subspace bias
    m = ConstrainedModel.build(constant_net(2, [0.5, 0.4, 0.4]), rule, cs)
    y, trace = forward_constrained(m, np.array([1.0, 0.0]))
    assert trace.alpha == 0.0 and trace.active_set.size == 0 and trace.argmax == -1
    np.testing.assert_allclose(y, [0.4, 0.3, 0.3], atol=1e-12)


def test_zero_safe_slack_gives_rule_output():
    # y <= 1 and y >= 0; rule y = 1 touches the upper bound (t_star = 0)
    cs = ConstraintSystem.from_constant([[1.0], [-1.0]], [[1.0, 0.0], [0.0, 0.0]], 0)
    rule = LinearDecisionRule([[1.0, 0.0]], 0.0, "lp")
    m = ConstrainedModel.build(constant_net(2, [5.0]), rule, cs)
    y, trace = forward_constrained(m, np.array([1.0, 0.5]))
    assert trace.alpha == 1.0
    np.testing.assert_allclose(y, [1.0])


def test_degenerate_safe_slack_detected():
    cs = ConstraintSystem.from_constant([[1.0], [-1.0]], [[1.0, 0.0], [0.0, 0.0]], 0)
    # claims t_star = 0.4 but F x = 0.9 has slack 0.1 < t_star / 2 on the upper row
    rule = LinearDecisionRule([[0.9, 0.0]], 0.4, "lp")
    m = ConstrainedModel.build(constant_net(2, [5.0]), rule, cs)
    with pytest.raises(SafeSlackDegenerate):
        forward_constrained(m, np.array([1.0, 0.5]))


def test_model_validation():
    cs, _ = simplex_system()
    rule = LinearDecisionRule(np.zeros((3, 2)), -0.5, "lp")
    with pytest.raises(ValueError):
        ConstrainedModel.build(init_mlp(2, 3, 0, (4,)), rule, cs)
    rule = LinearDecisionRule(np.zeros((3, 2)), 0.1, "lp")
    with pytest.raises(DimensionError):
        ConstrainedModel.build(init_mlp(2, 2, 0, (4,)), rule, cs)
    m = ConstrainedModel.build(init_mlp(2, 3, 0, (4,)), rule, cs)
    with pytest.raises(DimensionError):
        forward_constrained(m, np.ones(3))


@pytest.mark.parametrize("kind", ["simplex", "tilted"])
def test_hard_feasibility_and_binding_row(kind):
    for seed in range(3):
        m, space = build_model(kind, seed)
        cs = m.system
        X = sample(space, seed, 300)
        Y, tr = forward_constrained_batch(m, X)
        eq, ineq = cs.slack_batch(X, Y)
        g = X @ cs.rhs_B[: cs.m_eq].T
        assert np.max(np.linalg.norm(eq, axis=1) / (1 + np.linalg.norm(g, axis=1))) <= 1e-8
        assert ineq.min() >= -1e-9
        assert np.all((tr.alpha >= 0) & (tr.alpha <= 1))
        assert np.array_equal(tr.alpha > 0, np.any(tr.s_tn < 0, axis=1))
        rows = np.flatnonzero(tr.alpha > 0)
        assert rows.size > 0
        assert np.max(np.abs(ineq[rows, tr.argmax[rows]])) <= 1e-10
        # single and batch paths agree
        for b in range(5):
            y, trace = forward_constrained(m, X[b])
            np.testing.assert_allclose(y, Y[b], atol=1e-13)
            assert trace.alpha == pytest.approx(tr.alpha[b], abs=1e-13)


def test_gradient_alpha_zero_is_projected(rng):
    cs, _ = simplex_system()
    rule = LinearDecisionRule(np.array([[0.325, 0.28], [0.325, 0.24], [0.35, 0.48]]), 0.3, "lp")
    m = ConstrainedModel.build(constant_net(2, [0.5, 0.4, 0.4]), rule, cs)
    X = np.array([[1.0, 0.0]])
    _, tr = forward_constrained_batch(m, X)
    assert tr.alpha[0] == 0.0
    dY = rng.normal(size=(1, 3))
    np.testing.assert_allclose(output_grad(m, X, tr, dY), m.projector.nullspace_apply(X, dY), atol=1e-15)
    np.testing.assert_allclose(output_grad(m, X, tr, dY), dY - dY.mean(), atol=1e-14)


def test_gradient_alpha_one_is_finite(rng):
    cs = ConstraintSystem.from_constant([[1.0], [-1.0]], [[1.0, 0.0], [0.0, 0.0]], 0)
    m = ConstrainedModel.build(constant_net(2, [5.0]), LinearDecisionRule([[1.0, 0.0]], 0.0, "lp"), cs)
    X = np.array([[1.0, 0.5]])
    _, tr = forward_constrained_batch(m, X)
    assert tr.alpha[0] == 1.0
    grads = backward_constrained(m, X, np.ones((1, 1)), tr)
    assert all(np.all(np.isfinite(g)) for g in grads)


def composition_fd(m, x, d, eps=1e-6):
    """Central differences of d . f(x) with respect to the last-layer parameters."""
    W = m.task.weights[-1]
    b = m.task.biases[-1]
    gW = np.zeros_like(W)
    gb = np.zeros_like(b)

    def val(W2, b2):
        task = MlpParams(m.task.weights[:-1] + (W2,), m.task.biases[:-1] + (b2,))
        return d @ forward_constrained(m.with_task(task), x)[0]

    for idx in np.ndindex(W.shape):
        Wp, Wm = W.copy(), W.copy()
        Wp[idx] += eps
        Wm[idx] -= eps
        gW[idx] = (val(Wp, b) - val(Wm, b)) / (2 * eps)
    for i in range(b.size):
        bp, bm = b.copy(), b.copy()
        bp[i] += eps
        bm[i] -= eps
        gb[i] = (val(W, bp) - val(W, bm)) / (2 * eps)
    return gW, gb


@pytest.mark.parametrize("kind", ["simplex", "tilted"])
def test_gradient_matches_fd_interior_alpha(rng, kind):
    m, space = build_model(kind, 1, hidden=(6,))
    X = sample(space, 3, 200)
    _, tr = forward_constrained_batch(m, X)
    picked = [b for b in range(X.shape[0]) if 0.05 < tr.alpha[b] < 0.95 and ratio_margin(tr, b) > 1e-3][:3]
    assert picked
    for b in picked:
        d = rng.normal(size=m.system.n)
        grads = backward_constrained(m, X[b:b + 1], d[None, :])
        gW, gb = composition_fd(m, X[b], d)
        got = np.concatenate([grads[-2].ravel(), grads[-1]])
        want = np.concatenate([gW.ravel(), gb])
        assert np.linalg.norm(want) > 1e-3
        assert np.linalg.norm(got - want) / np.linalg.norm(want) <= 1e-3


def test_train_proposed_objective_and_supervised():
    m, space = build_model("simplex", 0, hidden=(16,), scale=1.0)
    X = sample(space, 1, 256)
    c = np.array([1.0, 2.0, 3.0])
    cfg = TrainConfig(epochs=20, lr=1e-3, batch_size=32, seed=0, pretrain_epochs=5)
    before = np.mean(m(X) @ c)
    trained = train_proposed(m, X, cfg, c=c)
    assert np.mean(trained(X) @ c) < before
    _, ineq = m.system.slack_batch(X, trained(X))
    assert ineq.min() >= -1e-9
    T = np.tile([0.6, 0.3, 0.1], (X.shape[0], 1)) * (1 + X[:, 1:2])
    sup = train_proposed(m, X, TrainConfig(epochs=20, lr=1e-3, batch_size=32, mode="supervised"), targets=T)
    assert np.mean((sup(X) - T) ** 2) < np.mean((m(X) - T) ** 2)
    with pytest.raises(ValueError):
        train_proposed(m, X, TrainConfig(epochs=1), c=None)
    with pytest.raises(ValueError):
        train_proposed(m, X, TrainConfig(epochs=1, mode="supervised"))
