"""Train a small classifier on the synthetic benchmark and read its
explanations: per-token attributions for single predictions and the
corpus-wide word ranking.

Run with: python3 demos/01_train_and_explain.py
"""

import numpy as np

from erloop import (
    SyntheticSpec,
    TextClassifier,
    TrainConfig,
    build_task_explanation,
    build_vocabulary,
    evaluate,
    generate_synthetic,
    input_times_gradient,
    integrated_gradients,
    normalize,
    predict_dataset,
    train_baseline,
)

spec = SyntheticSpec(seed=0)
train, id_eval, ood_eval = generate_synthetic(spec)
vocab = build_vocabulary(train)
print(f"benchmark: {len(train)} train / {len(id_eval)} id / {len(ood_eval)} ood, "
      f"vocabulary of {len(vocab)} tokens")

model = TextClassifier.init(vocab_size=len(vocab), num_classes=2, seed=0)
trained = train_baseline(model, train, TrainConfig(epochs=12, seed=0))
print(f"accuracy: id={evaluate(trained, id_eval):.3f} "
      f"ood={evaluate(trained, ood_eval):.3f}")
print("the gap is the planted decoy word doing its job\n")

# one instance, two attribution methods
example = train.examples[0]
pred = predict_dataset(trained, train)[0]
ixg = input_times_gradient(trained, example, pred.predicted_class)
ig = integrated_gradients(trained, example, pred.predicted_class, steps=64)
phi = normalize(ixg, "abs_max")
print(f"example {example.id} (label {example.label}, "
      f"predicted {pred.predicted_class}):")
for token, raw, smooth, p in zip(example.raw_tokens, ixg.scores, ig.scores,
                                 phi.scores):
    bar = "#" * int(round(10 * p))
    print(f"  {token:>10}  ixg={raw:+.3f}  ig={smooth:+.3f}  {bar}")

# the task explanation ranks words by mean attribution over the corpus
explanation = build_task_explanation(trained, train, "input_x_gradient", top_k=8)
print("\ntop words by mean attribution:")
for entry in explanation.entries:
    print(f"  {entry.word:>10}  mean={entry.mean_importance:.3f} "
          f"in {len(entry.support)} examples")
print("\nthe decoy ranks near the top even though it carries no task meaning")
