"""Benchmark orchestration: build instances, train every method, score the
predictions against the LP optimum and write CSV / markdown reports.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .baselines import ApmConfig, Dc3Config, apm_correct, dc3_correct, train_soft
from .blend import ConstrainedModel, forward_constrained, train_proposed
from .constraints import ConstraintSystem, sample
from .errors import ZeroOptimalObjective
from .instances import TaskInstance, generate, oracle_problem
from .safenet import train_ldr
from .solvers import OPTIMAL, solve_lp
from .tasknet import TrainConfig, forward, init_mlp

log = logging.getLogger(__name__)

METHODS = ("Optimizer", "Proposed", "APM", "DC3-style", "LDR")


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def optimality_gap(c, y_hat, y_star) -> float:
    """Percentage excess of ``c^T y_hat`` over ``c^T y_star``."""
    opt = float(np.dot(c, y_star))
    if opt == 0.0:
        raise ZeroOptimalObjective("optimal objective is zero; the relative gap is undefined")
    return 100.0 * (float(np.dot(c, y_hat)) - opt) / opt


def equality_violation(cs: ConstraintSystem, x, y) -> float:
    b = cs.rhs_at(x)[: cs.m_eq]
    r = cs.slack(x, y).eq_residual
    return float(np.linalg.norm(r) / (1.0 + np.linalg.norm(b)))


def inequality_violation(cs: ConstraintSystem, x, y) -> float:
    h = cs.rhs_at(x)[cs.m_eq:]
    s = cs.slack(x, y).ineq_slack
    return float(np.linalg.norm(np.maximum(-s, 0.0)) / (1.0 + np.linalg.norm(h)))


@dataclass
class MetricsRow:
    instance: str
    method: str
    gap_mean: float
    gap_worst: float
    eq_mean: float
    eq_worst: float
    ineq_mean: float
    ineq_worst: float
    time_ms: float
    iterations: float
    status: str = "ok"

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    @classmethod
    def failed(cls, instance, method, reason):
        nan = math.nan
        return cls(instance, method, nan, nan, nan, nan, nan, nan, nan, nan, f"incomplete: {reason}")


def summarize(instance, method, gaps, eqs, ineqs, times, iters) -> MetricsRow:
    gaps, eqs, ineqs = map(np.asarray, (gaps, eqs, ineqs))
    return MetricsRow(
        instance, method,
        float(gaps.mean()), float(gaps.max()),
        float(eqs.mean()), float(eqs.max()),
        float(ineqs.mean()), float(ineqs.max()),
        float(np.mean(times)) * 1e3, float(np.mean(iters)),
    )


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class BenchConfig:
    instances: list = field(default_factory=lambda: [{"kind": "dcopf", "size": 4, "seed": 0}])
    test_size: int = 100
    train_size: int = 1000
    seed: int = 0
    methods: list = field(default_factory=lambda: list(METHODS))
    out_dir: str = "bench_out"
    timing_repeats: int = 20
    epochs: int = 200
    pretrain_epochs: int = 50
    lr: float = 1e-4
    batch_size: int = 64
    hidden: list = field(default_factory=lambda: [256, 256])
    mode: str = "objective"
    penalty: float = 5000.0
    apm: dict = field(default_factory=dict)
    dc3: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.test_size < 1:
            raise ValueError("test_size must be at least 1")
        if self.timing_repeats < 1:
            raise ValueError("timing_repeats must be at least 1")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")

    @classmethod
    def from_json(cls, d) -> "BenchConfig":
        if isinstance(d, (str, Path)):
            d = json.loads(Path(d).read_text())
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(**d)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.epochs, self.lr, self.batch_size, self.seed, self.pretrain_epochs, self.mode,
                           tuple(self.hidden))


def load_instance(spec) -> TaskInstance:
    if isinstance(spec, TaskInstance):
        return spec
    if "path" in spec:
        return TaskInstance.load(spec["path"])
    return generate(spec["kind"], int(spec["size"]), int(spec.get("seed", 0)))


# ---------------------------------------------------------------------------
# trained predictors
# ---------------------------------------------------------------------------


@dataclass
class TrainedMethods:
    instance: TaskInstance
    rule: object
    proposed: ConstrainedModel | None = None
    soft: object = None  # task net for APM / DC3-style
    apm: ApmConfig = field(default_factory=ApmConfig)
    dc3: Dc3Config = field(default_factory=Dc3Config)

    def predictor(self, method):
        """``f(x) -> (y, iterations)`` for one input."""
        inst = self.instance
        cs = inst.system
        if method == "Optimizer":
            def f(x):
                sol = solve_lp(oracle_problem(inst, x))
                if sol.status != OPTIMAL:
                    raise RuntimeError(f"oracle LP is {sol.status}")
                return sol.z, sol.iterations
        elif method == "Proposed":
            def f(x):
                return forward_constrained(self.proposed, x)[0], 1
        elif method == "LDR":
            F = self.rule.F

            def f(x):
                return F @ x, 1
        elif method == "APM":
            def f(x):
                return apm_correct(cs, x, forward(self.soft, x)[0], self.apm)
        elif method == "DC3-style":
            def f(x):
                return dc3_correct(cs, x, forward(self.soft, x)[0], self.dc3)
        else:
            raise ValueError(method)
        return f


def train_methods(inst: TaskInstance, cfg: BenchConfig) -> TrainedMethods:
    cs = inst.system
    rule, _ = train_ldr(cs, inst.space)
    tm = TrainedMethods(inst, rule, apm=ApmConfig(**cfg.apm), dc3=Dc3Config(**{"penalty": cfg.penalty, **cfg.dc3}))
    needs_net = {"Proposed", "APM", "DC3-style"} & set(cfg.methods)
    if not needs_net:
        return tm
    X = sample(inst.sampling_space, cfg.seed + 1, cfg.train_size)
    tc = cfg.train_config()
    targets = None
    if tc.mode == "supervised":
        targets = np.array([solve_lp(oracle_problem(inst, x)).z for x in X])
    if "Proposed" in cfg.methods:
        task = init_mlp(cs.k, cs.n, cfg.seed, tc.hidden)
        model = ConstrainedModel.build(task, rule, cs, X[:16])
        tm.proposed = train_proposed(model, X, tc, c=inst.c, targets=targets)
    if {"APM", "DC3-style"} & set(cfg.methods):
        soft = init_mlp(cs.k, cs.n, cfg.seed + 7, tc.hidden)
        tm.soft = train_soft(soft, cs, X, inst.c, cfg.penalty, tc)
    return tm


def evaluate(tm: TrainedMethods, methods, X, y_star, repeats: int = 20) -> list:
    inst = tm.instance
    cs = inst.system
    rows = []
    for method in methods:
        f = tm.predictor(method)
        try:
            f(X[0])  # warm-up: keeps JIT compilation out of the timings
            gaps, eqs, ineqs, times, iters = [], [], [], [], []
            for x, ys in zip(X, y_star):
                samples = []
                for _ in range(repeats):
                    t0 = time.perf_counter()
                    y, it = f(x)
                    samples.append(time.perf_counter() - t0)
                times.append(float(np.median(samples)))
                iters.append(it)
                gaps.append(0.0 if method == "Optimizer" else optimality_gap(inst.c, y, ys))
                eqs.append(equality_violation(cs, x, y))
                ineqs.append(inequality_violation(cs, x, y))
            rows.append(summarize(inst.name, method, gaps, eqs, ineqs, times, iters))
        except Exception as exc:  # noqa: BLE001 - a failed method must not sink the report
            log.warning("%s on %s failed: %s", method, inst.name, exc)
            rows.append(MetricsRow.failed(inst.name, method, f"{type(exc).__name__}: {exc}"))
    return rows


def oracle_solutions(inst: TaskInstance, X):
    out = []
    for x in X:
        sol = solve_lp(oracle_problem(inst, x))
        if sol.status != OPTIMAL:
            raise RuntimeError(f"oracle LP is {sol.status} on a test input of {inst.name}")
        out.append(sol.z)
    return np.array(out)


def bench_instance(inst: TaskInstance, cfg: BenchConfig):
    tm = train_methods(inst, cfg)
    X = sample(inst.sampling_space, cfg.seed + 1000, cfg.test_size)
    y_star = oracle_solutions(inst, X)
    return evaluate(tm, cfg.methods, X, y_star, cfg.timing_repeats), tm


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def write_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MetricsRow.columns())
        for r in rows:
            d = asdict(r)
            w.writerow([f"{v:.6e}" if isinstance(v, float) else v for v in d.values()])


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        out = []
        for rec in csv.DictReader(fh):
            vals = {k: (v if k in ("instance", "method", "status") else float(v)) for k, v in rec.items()}
            out.append(MetricsRow(**vals))
        return out


def _mw(mean, worst, fmt="{:.3f}"):
    if math.isnan(mean):
        return "n/a"
    return f"{fmt.format(mean)}({fmt.format(worst)})"


def markdown_table(rows) -> str:
    lines = []
    by_inst = {}
    for r in rows:
        by_inst.setdefault(r.instance, []).append(r)
    for name, rs in by_inst.items():
        lines.append(f"### {name}\n")
        lines.append("| Method | Gap % | Eq. viol. | Ineq. viol. | Time ms (iter.) |")
        lines.append("|---|---|---|---|---|")
        for r in rs:
            t = "n/a" if math.isnan(r.time_ms) else f"{r.time_ms:.3f}({r.iterations:.3g})"
            note = "" if r.status == "ok" else f" [{r.status}]"
            lines.append(f"| {r.method}{note} | {_mw(r.gap_mean, r.gap_worst)} | {_mw(r.eq_mean, r.eq_worst)} | "
                         f"{_mw(r.ineq_mean, r.ineq_worst)} | {t} |")
        lines.append("")
    return "\n".join(lines)


def run_bench(cfg: BenchConfig):
    """Run every instance and write ``report.csv`` and ``report.md`` to ``cfg.out_dir``."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for spec in cfg.instances:
        try:
            inst = load_instance(spec)
        except Exception as exc:  # noqa: BLE001
            label = spec.get("path") or f"{spec.get('kind')}{spec.get('size')}"
            rows += [MetricsRow.failed(str(label), m, f"{type(exc).__name__}: {exc}") for m in cfg.methods]
            continue
        log.info("benchmarking %s", inst.name)
        try:
            inst_rows, _ = bench_instance(inst, cfg)
        except Exception as exc:  # noqa: BLE001
            inst_rows = [MetricsRow.failed(inst.name, m, f"{type(exc).__name__}: {exc}") for m in cfg.methods]
        rows += inst_rows
    write_csv(rows, out / "report.csv")
    header = f"Training mode: {cfg.mode}. Values are mean(worst) over {cfg.test_size} test inputs.\n\n"
    (out / "report.md").write_text(header + markdown_table(rows))
    return rows
