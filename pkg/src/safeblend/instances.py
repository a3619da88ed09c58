"""Synthetic benchmark instances.

``dcopf``
    DC optimal power flow on a ring-plus-chords network.  Decisions are
    generator outputs and bus angles, demands are the uncertain inputs and
    only the right-hand side depends on them.
``portfolio``
    Bond-portfolio allocation.  Budget and duration targets are equalities;
    group floors, a rating floor and a maturity cap are inequalities, and the
    rating and maturity coefficients depend on the uncertain inputs.

Every emitted instance carries a certified decision rule (``t_star >= 0``);
generators resample up to ``MAX_ATTEMPTS`` times before giving up.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constraints import (
    ConstraintSystem,
    EllipsoidIntersection,
    Polytope,
    SpaceBundle,
    space_from_json,
    space_to_json,
)
from .errors import NoFeasibleRule, SafeBlendError
from .solvers import LpProblem, LpSolution, solve_lp

MAX_ATTEMPTS = 50
UNCERTAINTY = 0.4


class GenerationFailed(SafeBlendError):
    pass


@dataclass(eq=False)
class TaskInstance:
    name: str
    kind: str
    system: ConstraintSystem
    space: SpaceBundle
    c: np.ndarray
    seed: int
    meta: dict = field(default_factory=dict)

    @property
    def dims(self) -> dict:
        cs = self.system
        return {"n": cs.n, "k": cs.k, "m_eq": cs.m_eq, "m_ineq": cs.m_ineq}

    @property
    def sampling_space(self):
        return self.space.primary

    def to_json(self) -> dict:
        prim = self.space.primary
        d = dict(self.system.to_json())
        d.update({
            "name": self.name,
            "kind": self.kind,
            "seed": self.seed,
            "input_space": space_to_json(self.space),
            "bounding_box": prim.bounding_box.tolist(),
            "objective_c": self.c.tolist(),
            "feasible_witness": prim.witness.tolist(),
            "meta": self.meta,
        })
        return d

    @classmethod
    def from_json(cls, d: dict) -> "TaskInstance":
        cs = ConstraintSystem.from_json(d)
        space = space_from_json(d["input_space"], d["bounding_box"], d["feasible_witness"])
        return cls(d.get("name", "instance"), d.get("kind", ""), cs, space,
                   np.asarray(d["objective_c"], dtype=np.float64), int(d.get("seed", 0)), d.get("meta", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> "TaskInstance":
        return cls.from_json(json.loads(Path(path).read_text()))


def oracle_problem(inst: TaskInstance, x) -> LpProblem:
    """The LP ``min c^T y s.t. y in C(x)`` at a fixed input."""
    cs = inst.system
    A = cs.lhs_at(x)
    b = cs.rhs_at(x)
    return LpProblem(inst.c, A[: cs.m_eq], b[: cs.m_eq], A[cs.m_eq:], b[cs.m_eq:])


def solve_oracle(inst: TaskInstance, x) -> LpSolution:
    return solve_lp(oracle_problem(inst, x))


def _certify(inst: TaskInstance):
    # local import: safenet pulls in the solver stack
    from .safenet import train_ldr

    return train_ldr(inst.system, inst.space)


# ---------------------------------------------------------------------------
# DC-OPF
# ---------------------------------------------------------------------------


def _network(N, rng):
    lines = [(i, (i + 1) % N) for i in range(N)] if N > 2 else [(0, 1)]
    have = {tuple(sorted(e)) for e in lines}
    candidates = [(i, j) for i in range(N) for j in range(i + 1, N) if (i, j) not in have]
    n_chords = min(max(1, N // 4), len(candidates))
    if n_chords:
        pick = rng.choice(len(candidates), size=n_chords, replace=False)
        lines += [candidates[p] for p in sorted(pick)]
    return np.array(lines, dtype=np.int64)


def _dcopf_once(N, rng):
    lines = _network(N, rng)
    L = lines.shape[0]
    ng = max(2, N // 3)
    gen_bus = np.concatenate([[0], np.sort(rng.choice(np.arange(1, N), size=ng - 1, replace=False))])
    d_nom = rng.uniform(0.5, 1.5, size=N)
    lo, hi = (1 - UNCERTAINTY) * d_nom, (1 + UNCERTAINTY) * d_nom
    susc = rng.uniform(5.0, 15.0, size=L)
    share = rng.uniform(0.5, 1.5, size=ng)
    pmax = 2.0 * hi.sum() * share / share.sum()
    cost = rng.uniform(1.0, 3.0, size=ng)

    # incidence and bus susceptance matrix
    Inc = np.zeros((L, N))
    Inc[np.arange(L), lines[:, 0]] = 1.0
    Inc[np.arange(L), lines[:, 1]] = -1.0
    Bbus = Inc.T @ (susc[:, None] * Inc)
    Cg = np.zeros((N, ng))
    Cg[gen_bus, np.arange(ng)] = 1.0

    # worst-case flows under dispatch proportional to capacity
    X = np.zeros((N, N))
    X[1:, 1:] = np.linalg.inv(Bbus[1:, 1:])
    ptdf = (susc[:, None] * Inc) @ X
    part = pmax / pmax.sum()
    flow_of_d = ptdf @ (Cg @ part[:, None] @ np.ones((1, N)) - np.eye(N))
    worst = np.abs(flow_of_d @ d_nom) + np.abs(flow_of_d) @ (hi - d_nom)
    fmax = np.maximum(rng.uniform(0.7, 1.5, size=L) * worst, 0.05)

    n = ng + N
    k = N + 1
    # equalities: Cg pg - Bbus theta = d ; theta_0 = 0
    A_eq = np.zeros((N + 1, n))
    A_eq[:N, :ng] = Cg
    A_eq[:N, ng:] = -Bbus
    A_eq[N, ng] = 1.0
    B_eq = np.zeros((N + 1, k))
    B_eq[:N, 1:] = np.eye(N)
    # inequalities: -pg <= 0, pg <= pmax, +-flow <= fmax
    F = susc[:, None] * Inc
    A_in = np.zeros((2 * ng + 2 * L, n))
    A_in[:ng, :ng] = -np.eye(ng)
    A_in[ng:2 * ng, :ng] = np.eye(ng)
    A_in[2 * ng:2 * ng + L, ng:] = F
    A_in[2 * ng + L:, ng:] = -F
    B_in = np.zeros((2 * ng + 2 * L, k))
    B_in[ng:2 * ng, 0] = pmax
    B_in[2 * ng:, 0] = np.concatenate([fmax, fmax])
    cs = ConstraintSystem.from_constant(np.vstack([A_eq, A_in]), np.vstack([B_eq, B_in]), N + 1)
    c = np.concatenate([cost, np.zeros(N)])
    space = SpaceBundle(polytope=Polytope.box(lo, hi))
    meta = {"lines": lines.tolist(), "gen_bus": gen_bus.tolist(), "uncertainty": UNCERTAINTY}
    return cs, space, c, meta


def gen_dcopf_like(num_buses: int, seed: int) -> TaskInstance:
    if num_buses < 3:
        raise ValueError("num_buses must be at least 3")
    rng = np.random.default_rng(seed)
    for attempt in range(MAX_ATTEMPTS):
        cs, space, c, meta = _dcopf_once(num_buses, rng)
        inst = TaskInstance(f"dcopf{num_buses}_s{seed}", "dcopf", cs, space, c, seed, meta)
        try:
            rule, rep = _certify(inst)
        except NoFeasibleRule:
            continue
        inst.meta.update({"attempt": attempt, "t_star": rep.t_star})
        return inst
    raise GenerationFailed(f"no certifiable DC-OPF instance after {MAX_ATTEMPTS} attempts")


# ---------------------------------------------------------------------------
# portfolio
# ---------------------------------------------------------------------------


def _ellipsoid_min(w0, w, center, half, radius):
    """min over {(xi-c)^T diag(1/half^2) (xi-c) <= r^2} of w0 + w^T xi."""
    return w0 + w @ center - radius * np.linalg.norm(half * w)


def _portfolio_once(k, n, rng, lhs_uncertainty, n_groups):
    d_unc = k - 1
    xi0 = rng.uniform(0.5, 1.5, size=d_unc)
    half = UNCERTAINTY * xi0
    lo, hi = xi0 - half, xi0 + half
    radius = np.sqrt(d_unc)

    groups = np.arange(n) % n_groups
    rng.shuffle(groups)
    dur = rng.uniform(1.0, 10.0, size=n)
    rating0 = rng.uniform(1.0, 5.0, size=n)
    mat0 = rng.uniform(1.0, 10.0, size=n)
    # each input shifts the rating (or maturity) of one issuer group, so the
    # uncertain part of both rows stays in the span of the group indicators;
    # that keeps the LP bounded for every input without sign constraints
    onehot = (groups[:, None] == np.arange(n_groups)[None, :]).astype(float)
    Wr = lhs_uncertainty * onehot[:, np.arange(d_unc) % n_groups] * rng.uniform(0.2, 1.0, size=d_unc)
    Wm = lhs_uncertainty * onehot[:, (np.arange(d_unc) + 3) % n_groups] * rng.uniform(0.2, 1.0, size=d_unc)
    cost_g = rng.uniform(0.5, 1.5, size=n_groups)
    # better ratings and shorter maturities cost more, so both rows bind at the optimum
    c = cost_g[groups] + 0.3 * rating0 + 0.1 * (10.0 - mat0) + 0.05 * dur

    y0 = np.full(n, 1.0 / n)
    D = float(dur @ y0)
    # rating(xi) = rating0 + Wr (xi - xi0) ; maturity likewise
    r_const = rating0 - Wr @ xi0
    m_const = mat0 - Wm @ xi0
    r_worst = _ellipsoid_min(r_const @ y0, Wr.T @ y0, xi0, half, radius)
    m_worst = -_ellipsoid_min(-(m_const @ y0), -(Wm.T @ y0), xi0, half, radius)
    R = r_worst - 0.1 * abs(r_worst)
    M = m_worst + 0.1 * abs(m_worst)
    floors = np.array([0.5 * y0[groups == g].sum() for g in range(n_groups)])

    m_eq, m_in = 2, n_groups + 2
    T = np.zeros((m_eq + m_in, k, n))
    B = np.zeros((m_eq + m_in, k))
    T[0, 0] = 1.0
    B[0, 0] = 1.0
    T[1, 0] = dur
    B[1, 0] = D
    for g in range(n_groups):
        T[2 + g, 0] = -(groups == g).astype(float)
        B[2 + g, 0] = -floors[g]
    # -rating(x)^T y <= -R
    T[2 + n_groups, 0] = -r_const
    T[2 + n_groups, 1:] = -Wr.T
    B[2 + n_groups, 0] = -R
    # maturity(x)^T y <= M
    T[3 + n_groups, 0] = m_const
    T[3 + n_groups, 1:] = Wm.T
    B[3 + n_groups, 0] = M
    cs = ConstraintSystem(T, B, m_eq)
    space = SpaceBundle(polytope=Polytope.box(lo, hi), ellipsoids=EllipsoidIntersection.bounding_box_ellipsoid(lo, hi))
    meta = {"groups": groups.tolist(), "uncertainty": UNCERTAINTY, "lhs_uncertainty": lhs_uncertainty}
    return cs, space, c, meta


def gen_portfolio_like(k: int = 10, n: int = 16, seed: int = 0, lhs_uncertainty: float = 1.0,
                       n_groups: int | None = None) -> TaskInstance:
    """Default dimensions give ``n=16, m_eq=2, m_ineq=9, k=10``.

    ``lhs_uncertainty`` scales how strongly the rating and maturity
    coefficients move with the inputs; at zero the left-hand side is constant.
    """
    if k < 2 or n < 2:
        raise ValueError("k and n must be at least 2")
    if n_groups is None:
        n_groups = min(7, n)
    rng = np.random.default_rng(seed)
    for attempt in range(MAX_ATTEMPTS):
        cs, space, c, meta = _portfolio_once(k, n, rng, lhs_uncertainty, n_groups)
        inst = TaskInstance(f"portfolio{n}x{k}_s{seed}", "portfolio", cs, space, c, seed, meta)
        try:
            rule, rep = _certify(inst)
        except NoFeasibleRule:
            continue
        inst.meta.update({"attempt": attempt, "t_star": rep.t_star})
        return inst
    raise GenerationFailed(f"no certifiable portfolio instance after {MAX_ATTEMPTS} attempts")


def generate(kind: str, size: int, seed: int) -> TaskInstance:
    """CLI entry: ``size`` is the bus count for DC-OPF and the asset count for portfolios."""
    if kind == "dcopf":
        return gen_dcopf_like(size, seed)
    if kind == "portfolio":
        return gen_portfolio_like(n=size, seed=seed)
    raise ValueError(f"unknown instance kind {kind!r}")
