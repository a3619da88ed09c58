"""Command line interface: ``safeblend generate|train|eval|bench``.

On failure a single JSON line ``{"error": ..., "message": ...}`` is written to
stderr and the exit status is non-zero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .baselines import ApmConfig, Dc3Config, train_soft
from .blend import ConstrainedModel, train_proposed
from .constraints import sample
from .harness import BenchConfig, TrainedMethods, evaluate, markdown_table, oracle_solutions, run_bench
from .instances import TaskInstance, generate, oracle_problem
from .safenet import LinearDecisionRule, train_ldr
from .solvers import solve_lp
from .tasknet import MlpParams, TrainConfig, init_mlp

METHOD_NAMES = {"proposed": "Proposed", "ldr": "LDR", "apm": "APM", "dc3": "DC3-style"}


def _cmd_generate(args):
    inst = generate(args.kind, args.size, args.seed)
    inst.save(args.out)
    print(json.dumps({"instance": inst.name, "dims": inst.dims, "out": str(args.out)}))


def _cmd_train(args):
    inst = TaskInstance.load(args.instance)
    cs = inst.system
    rule, rep = train_ldr(cs, inst.space)
    model = {"method": args.method, "instance": inst.name, "rule": rule.to_json()}
    if args.method != "ldr":
        X = sample(inst.sampling_space, args.seed + 1, args.train_size)
        tc = TrainConfig(args.epochs, args.lr, args.batch_size, args.seed, args.pretrain_epochs, args.mode,
                         tuple(args.hidden))
        task = init_mlp(cs.k, cs.n, args.seed, tc.hidden)
        if args.method == "proposed":
            targets = None
            if tc.mode == "supervised":
                targets = np.array([solve_lp(oracle_problem(inst, x)).z for x in X])
            cm = ConstrainedModel.build(task, rule, cs, X[:16])
            task = train_proposed(cm, X, tc, c=inst.c, targets=targets).task
        else:
            task = train_soft(task, cs, X, inst.c, args.penalty, tc)
        model["task"] = task.to_json()
        model["training"] = {"mode": tc.mode if args.method == "proposed" else "soft-penalty",
                             "epochs": tc.epochs, "penalty": args.penalty}
    Path(args.out).write_text(json.dumps(model))
    print(json.dumps({"model": str(args.out), "method": args.method, "t_star": rep.t_star}))


def _load_trained(inst: TaskInstance, model: dict) -> TrainedMethods:
    rule = LinearDecisionRule.from_json(model["rule"])
    tm = TrainedMethods(inst, rule, apm=ApmConfig(), dc3=Dc3Config())
    method = model["method"]
    if method == "proposed":
        tm.proposed = ConstrainedModel.build(MlpParams.from_json(model["task"]), rule, inst.system)
    elif method in ("apm", "dc3"):
        tm.soft = MlpParams.from_json(model["task"])
    return tm


def _cmd_eval(args):
    inst = TaskInstance.load(args.instance)
    model = json.loads(Path(args.model).read_text())
    tm = _load_trained(inst, model)
    X = sample(inst.sampling_space, args.seed + 1000, args.testset)
    y_star = oracle_solutions(inst, X)
    rows = evaluate(tm, [METHOD_NAMES[model["method"]]], X, y_star, args.repeats)
    for r in rows:
        print(json.dumps(r.__dict__))
    if args.markdown:
        print(markdown_table(rows))


def _cmd_bench(args):
    cfg = BenchConfig.from_json(args.config)
    if args.out_dir:
        cfg.out_dir = args.out_dir
    rows = run_bench(cfg)
    incomplete = [r for r in rows if r.status != "ok"]
    print(json.dumps({"report_csv": str(Path(cfg.out_dir) / "report.csv"),
                      "report_md": str(Path(cfg.out_dir) / "report.md"),
                      "rows": len(rows), "incomplete": len(incomplete)}))
    return 2 if incomplete else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="safeblend", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic instance as JSON")
    g.add_argument("--kind", choices=["dcopf", "portfolio"], required=True)
    g.add_argument("--size", type=int, required=True, help="buses (dcopf) or assets (portfolio)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", type=Path, required=True)
    g.set_defaults(func=_cmd_generate)

    t = sub.add_parser("train", help="train one method on an instance")
    t.add_argument("--instance", type=Path, required=True)
    t.add_argument("--method", choices=list(METHOD_NAMES), required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", type=Path, required=True)
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--pretrain-epochs", type=int, default=50)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--batch-size", type=int, default=64)
    t.add_argument("--train-size", type=int, default=1000)
    t.add_argument("--hidden", type=int, nargs="+", default=[256, 256])
    t.add_argument("--mode", choices=["objective", "supervised"], default="objective")
    t.add_argument("--penalty", type=float, default=5000.0)
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("eval", help="score a trained model on fresh test inputs")
    e.add_argument("--instance", type=Path, required=True)
    e.add_argument("--model", type=Path, required=True)
    e.add_argument("--testset", type=int, default=100)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--repeats", type=int, default=20)
    e.add_argument("--markdown", action="store_true")
    e.set_defaults(func=_cmd_eval)

    b = sub.add_parser("bench", help="run the full benchmark from a JSON config")
    b.add_argument("--config", type=Path, required=True)
    b.add_argument("--out-dir", default=None)
    b.set_defaults(func=_cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        code = args.func(args)
    except Exception as exc:  # noqa: BLE001 - top-level error reporting
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1
    return int(code or 0)


if __name__ == "__main__":
    sys.exit(main())
