"""Experimental protocol: retrain under every policy/loss combination,
then ask how far an annotation time budget stretches when each piece of
feedback is cheaper to give.

Run with: python3 demos/03_sweep_and_budget.py
"""

import tempfile
from pathlib import Path

from erloop import (
    DEFAULT_COSTS,
    ERConfig,
    FeedbackOp,
    SyntheticSpec,
    TextClassifier,
    TrainConfig,
    build_vocabulary,
    generate_synthetic,
    make_budget_pipeline,
    run_policy_sweep,
    save_budget_csv,
    save_sweep_csv,
    signal_rationales,
    simulate_budget,
    train_baseline,
)

spec = SyntheticSpec(seed=0)
train, id_eval, ood_eval = generate_synthetic(spec)
vocab = build_vocabulary(train)
model = TextClassifier.init(vocab_size=len(vocab), num_classes=2, seed=0)
baseline = train_baseline(model, train, TrainConfig(epochs=12, seed=0))
feedback = [FeedbackOp(scope="task", op="remove", word=spec.decoy_word,
                       timestamp=0)]

table = run_policy_sweep(
    baseline, train, id_eval, [ood_eval], feedback,
    config=ERConfig(epochs=10, seed=0),
)
print(f"{'policy':<15} {'loss':<5} {'id_acc':>7} {'ood_acc':>8}")
for row in table.rows:
    ood = " ".join(f"{a:8.3f}" for a in row.ood_accuracies)
    print(f"{row.policy:<15} {row.loss:<5} {row.id_accuracy:7.3f} {ood}")
outdir = Path(tempfile.mkdtemp(prefix="erloop-demo-"))
save_sweep_csv(table, outdir / "sweep.csv")
print(f"wrote {outdir / 'sweep.csv'}\n")

# simulated instance-level annotators under a time budget: explanation
# feedback takes about a minute per instance, plain rationale markup
# nearly two
rationales = signal_rationales(train, spec)
pipeline = make_budget_pipeline(
    baseline, train, rationales, ood_eval, config=ERConfig(epochs=5, seed=0)
)
budgets = [3600.0 * k for k in (1, 2, 4)]
points = simulate_budget(DEFAULT_COSTS, budgets, pipeline)
print(f"{'method':<12} {'budget_s':>9} {'instances':>9} {'ood_acc':>8}")
for p in points:
    print(f"{p.method:<12} {p.budget_seconds:9.0f} "
          f"{p.instances_annotatable:9d} {p.accuracy:8.3f}")
save_budget_csv(points, outdir / "budget.csv")
print(f"wrote {outdir / 'budget.csv'}")
