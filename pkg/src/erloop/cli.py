"""Command line front door: serve the HTTP API, run a regularization
policy sweep on the synthetic benchmark, or tabulate the annotation
time-budget simulation."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .data import build_vocabulary
from .ertrain import ERConfig
from .model import TextClassifier
from .service import DATA_DIR_ENV, create_app
from .simulate import (
    DEFAULT_COSTS,
    SyntheticSpec,
    generate_synthetic,
    make_budget_pipeline,
    parallel_budget,
    run_policy_sweep,
    save_budget_csv,
    save_sweep_csv,
    signal_rationales,
    simulate_budget,
    simulate_task_feedback,
)
from .train import TrainConfig, evaluate, train_baseline


def _load_spec_file(path: str | None) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def _benchmark(spec: dict):
    bench = SyntheticSpec(**spec.get("benchmark", {}))
    train, id_eval, ood_eval = generate_synthetic(bench)
    vocab = build_vocabulary(train)
    model = TextClassifier.init(vocab_size=len(vocab), num_classes=2,
                                seed=bench.seed)
    baseline = train_baseline(
        model, train, TrainConfig(**spec.get("baseline", {"epochs": 12}))
    )
    return bench, train, id_eval, ood_eval, vocab, baseline


def cmd_serve(args) -> int:
    import uvicorn

    data_dir = args.data_dir or os.environ.get(DATA_DIR_ENV, "erloop_data")
    app = create_app(data_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def cmd_run_sweep(args) -> int:
    spec = _load_spec_file(args.spec)
    bench, train, id_eval, ood_eval, vocab, baseline = _benchmark(spec)
    lexicon = spec.get("feedback_lexicon", [bench.decoy_word])
    log, skipped = simulate_task_feedback(lexicon, vocab)
    if skipped:
        print(f"skipped out-of-vocabulary words: {skipped}", file=sys.stderr)
    if not log:
        print("no usable feedback words; nothing to sweep", file=sys.stderr)
        return 1
    config = ERConfig(**spec.get("er", {}))
    table = run_policy_sweep(baseline, train, id_eval, [ood_eval], log, config=config)
    save_sweep_csv(table, args.out)
    print(f"{'policy':<15} {'loss':<5} {'id_acc':>7} {'ood_acc':>8}")
    for row in table.rows:
        if row.error is not None:
            print(f"{row.policy:<15} {row.loss:<5} failed: {row.error}")
            continue
        ood = " ".join(f"{a:8.4f}" for a in row.ood_accuracies)
        print(f"{row.policy:<15} {row.loss:<5} {row.id_accuracy:7.4f} {ood}")
    print(f"wrote {args.out}")
    return 0


def cmd_simulate_budget(args) -> int:
    spec = _load_spec_file(args.spec)
    bench, train, id_eval, ood_eval, vocab, baseline = _benchmark(spec)
    rationales = signal_rationales(train, bench)
    config = ERConfig(**spec.get("er", {}))
    pipeline = make_budget_pipeline(baseline, train, rationales, ood_eval,
                                    config=config)
    budgets = [float(b) for b in args.budgets.split(",") if b.strip()]
    if args.annotators > 1:
        budgets = [parallel_budget(b, args.annotators) for b in budgets]
    costs = {"tool": args.tool_cost, "traditional": args.traditional_cost}
    points = simulate_budget(costs, budgets, pipeline)
    save_budget_csv(points, args.out)
    print(f"baseline ood accuracy: {evaluate(baseline, ood_eval):.4f}")
    print(f"{'method':<12} {'budget_s':>9} {'instances':>9} {'accuracy':>9}")
    for p in points:
        print(
            f"{p.method:<12} {p.budget_seconds:9.0f} "
            f"{p.instances_annotatable:9d} {p.accuracy:9.4f}"
        )
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="erloop",
        description="explanation-guided debugging for text classifiers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the debugging HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--data-dir", default=None,
                       help=f"session storage directory (or ${DATA_DIR_ENV})")
    serve.set_defaults(func=cmd_serve)

    sweep = sub.add_parser(
        "run-sweep", help="retrain under every policy/loss pair and tabulate"
    )
    sweep.add_argument("--spec", default=None,
                       help="JSON file with benchmark/baseline/er settings")
    sweep.add_argument("--out", default="sweep.csv")
    sweep.set_defaults(func=cmd_run_sweep)

    budget = sub.add_parser(
        "simulate-budget", help="instances affordable per annotation budget"
    )
    budget.add_argument("--spec", default=None)
    budget.add_argument("--budgets", default="3600,7200,10800,14400",
                        help="comma-separated budgets in seconds")
    budget.add_argument("--annotators", type=int, default=1)
    budget.add_argument("--tool-cost", type=float,
                        default=DEFAULT_COSTS["tool"])
    budget.add_argument("--traditional-cost", type=float,
                        default=DEFAULT_COSTS["traditional"])
    budget.add_argument("--out", default="budget.csv")
    budget.set_defaults(func=cmd_simulate_budget)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
