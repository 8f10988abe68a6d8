"""The core debugging loop in one script: a model that latched onto a
spurious word, one piece of human feedback, and a retrain that fixes the
out-of-distribution failure.

Run with: python3 demos/02_debug_with_feedback.py
"""

import numpy as np

from erloop import (
    ERConfig,
    FeedbackOp,
    RegularizationPolicy,
    SyntheticSpec,
    TextClassifier,
    TrainConfig,
    build_vocabulary,
    debug_retrain,
    evaluate,
    generate_synthetic,
    train_baseline,
    word_attribution_profile,
)

spec = SyntheticSpec(seed=0)
train, id_eval, ood_eval = generate_synthetic(spec)
vocab = build_vocabulary(train)
model = TextClassifier.init(vocab_size=len(vocab), num_classes=2, seed=0)
baseline = train_baseline(model, train, TrainConfig(epochs=12, seed=0))

attr, _ = word_attribution_profile(baseline, train, spec.decoy_word)
print("before debugging:")
print(f"  id accuracy  {evaluate(baseline, id_eval):.3f}")
print(f"  ood accuracy {evaluate(baseline, ood_eval):.3f}")
print(f"  decoy mean normalized attribution {attr:.3f}")
print("the model leans on the decoy, which flips meaning out of distribution\n")

# the whole human contribution: one task-scope remove on one word
feedback = [FeedbackOp(scope="task", op="remove", word=spec.decoy_word,
                       timestamp=0)]
debugged, report = debug_retrain(
    baseline, train, feedback, RegularizationPolicy("all"),
    ERConfig(loss="mse", strength=1.0, epochs=10, seed=0),
    id_eval, ood_eval,
)

attr, per_example = word_attribution_profile(debugged, train, spec.decoy_word)
print("after one retraining round:")
print(f"  id accuracy  {evaluate(debugged, id_eval):.3f}")
print(f"  ood accuracy {evaluate(debugged, ood_eval):.3f}")
print(f"  decoy mean normalized attribution {attr:.3f}")
print(f"  decoy below 0.2 in {100 * np.mean(np.array(per_example) < 0.2):.0f}% "
      f"of its examples\n")

joint = np.array(report.task_loss_history) + np.array(report.er_loss_history)
print("joint loss per epoch:", np.array2string(joint, precision=3))
print("\nreport summary:")
print(f"  ood {report.pre_ood_accuracy:.3f} -> {report.post_ood_accuracy:.3f}")
print(f"  id  {report.pre_id_accuracy:.3f} -> {report.post_id_accuracy:.3f}")
print(f"  target attribution {report.pre_target_attribution:.3f} -> "
      f"{report.post_target_attribution:.3f}")
