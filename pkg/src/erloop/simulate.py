"""Experimental protocol at desk scale: a synthetic spurious-correlation
benchmark, simulated feedback, regularization-policy sweeps, and the
annotation time-budget simulation.

The benchmark plants a decoy word whose presence tracks the label in
training data (correlation rho_train) but reverses out of distribution
(rho_ood), alongside genuinely predictive per-class signal words.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .attribution import NormalizedAttribution, normalized_batch
from .data import Dataset, Example, Vocabulary, build_vocabulary
from .errors import ErloopError, ValidationError
from .ertrain import DebugReport, ERConfig, debug_retrain
from .feedback import FeedbackOp, RegularizationPolicy
from .model import Prediction, TextClassifier, predict_dataset, predict_logits
from .train import evaluate


@dataclass(frozen=True)
class RationaleAnnotation:
    """Ground-truth importance mask for one example; 1 marks a token a
    human would call the reason for the label."""

    example_id: str
    mask: tuple[int, ...]

    def __post_init__(self):
        if any(v not in (0, 1) for v in self.mask):
            raise ValidationError(f"rationale for {self.example_id!r} must be binary")


@dataclass(frozen=True)
class SyntheticSpec:
    vocab_size: int = 60
    train_size: int = 1000
    id_eval_size: int = 500
    ood_eval_size: int = 500
    decoy_word: str = "decoy"
    rho_train: float = 0.95
    rho_ood: float = 0.05
    signal_words_per_class: int = 4
    seed: int = 0
    min_fillers: int = 3
    max_fillers: int = 7

    def validate(self) -> None:
        if not (0.0 <= self.rho_train <= 1.0 and 0.0 <= self.rho_ood <= 1.0):
            raise ValidationError("correlations must lie in [0, 1]")
        if self.vocab_size < 1 or self.signal_words_per_class < 1:
            raise ValidationError("word pools must be nonempty")
        if min(self.train_size, self.id_eval_size, self.ood_eval_size) < 2:
            raise ValidationError("each split needs at least two examples")
        if self.decoy_word in self.signal_words(0) or self.decoy_word in self.signal_words(1):
            raise ValidationError("decoy word must be disjoint from signal words")
        if not 0 <= self.min_fillers <= self.max_fillers:
            raise ValidationError("bad filler range")

    def signal_words(self, class_id: int) -> list[str]:
        return [f"sig{class_id}x{j}" for j in range(self.signal_words_per_class)]

    def filler_words(self) -> list[str]:
        return [f"fill{j:03d}" for j in range(self.vocab_size)]


def _generate_split(
    spec: SyntheticSpec, rng: np.random.Generator, size: int, rho: float, tag: str
) -> list[tuple[str, list[str], int]]:
    labels = np.array([0] * (size // 2) + [1] * (size - size // 2))
    rng.shuffle(labels)
    fillers = spec.filler_words()
    rows = []
    for i, label in enumerate(labels):
        label = int(label)
        tokens = [str(rng.choice(spec.signal_words(label)))]
        n_fill = int(rng.integers(spec.min_fillers, spec.max_fillers + 1))
        tokens.extend(str(w) for w in rng.choice(fillers, size=n_fill))
        p_decoy = rho if label == 1 else 1.0 - rho
        if rng.random() < p_decoy:
            tokens.append(spec.decoy_word)
        rng.shuffle(tokens)
        rows.append((f"{tag}-{i:05d}", tokens, label))
    return rows


def generate_synthetic(spec: SyntheticSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Three splits sharing one vocabulary built from the training split."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    train_rows = _generate_split(spec, rng, spec.train_size, spec.rho_train, "train")
    id_rows = _generate_split(spec, rng, spec.id_eval_size, spec.rho_train, "id")
    ood_rows = _generate_split(spec, rng, spec.ood_eval_size, spec.rho_ood, "ood")
    vocab = build_vocabulary([tokens for _, tokens, _ in train_rows])

    def build(rows, tag):
        examples = [
            Example(id=r, token_ids=vocab.encode(tokens), raw_tokens=tuple(tokens), label=label)
            for r, tokens, label in rows
        ]
        return Dataset(examples=examples, num_classes=2, split_tag=tag)

    return build(train_rows, "train"), build(id_rows, "id_eval"), build(ood_rows, "ood_eval")


def signal_rationales(data: Dataset, spec: SyntheticSpec) -> list[RationaleAnnotation]:
    """Masks marking each example's class-signal words as the true reason."""
    out = []
    for ex in data:
        signals = set(spec.signal_words(ex.label))
        mask = tuple(1 if t in signals else 0 for t in ex.raw_tokens)
        out.append(RationaleAnnotation(example_id=ex.id, mask=mask))
    return out


def simulate_instance_feedback(
    rationales: Sequence[RationaleAnnotation],
    predictions: Sequence[Prediction],
    data: Dataset,
    attributions: dict[str, NormalizedAttribution],
    budget_instances: int,
    tau: float = 0.5,
    start_timestamp: int = 0,
) -> list[FeedbackOp]:
    """Turn ground-truth rationales into instance feedback.

    Walks rationales in order, spending budget only on correctly-predicted
    examples. Mask-1 words become add ops; mask-0 words whose normalized
    attribution exceeds tau become remove ops. A word both added and
    removable within one example is added.
    """
    preds = {p.example_id: p for p in predictions}
    ops: list[FeedbackOp] = []
    timestamp = start_timestamp
    spent = 0
    for annotation in rationales:
        if spent >= budget_instances:
            break
        pred = preds.get(annotation.example_id)
        if pred is None or not pred.correct:
            continue
        example = data.example(annotation.example_id)
        if len(annotation.mask) != example.n:
            raise ValidationError(
                f"rationale mask for {example.id!r} has length {len(annotation.mask)}, "
                f"example has {example.n} tokens"
            )
        attr = attributions.get(example.id)
        added: list[str] = []
        removed: list[str] = []
        for pos, token in enumerate(example.raw_tokens):
            word = token.lower()
            if annotation.mask[pos] == 1:
                if word not in added:
                    added.append(word)
            elif attr is not None and float(attr.scores[pos]) > tau:
                if word not in removed:
                    removed.append(word)
        for word in added:
            ops.append(
                FeedbackOp(scope="instance", op="add", word=word,
                           example_id=example.id, timestamp=timestamp)
            )
            timestamp += 1
        for word in removed:
            if word in added:
                continue
            ops.append(
                FeedbackOp(scope="instance", op="remove", word=word,
                           example_id=example.id, timestamp=timestamp)
            )
            timestamp += 1
        spent += 1
    return ops


def simulate_task_feedback(
    lexicon: Sequence[str], vocab: Vocabulary, start_timestamp: int = 0
) -> tuple[list[FeedbackOp], list[str]]:
    """One task-scope remove per lexicon word in the vocabulary; absent
    words land in the skip list."""
    ops: list[FeedbackOp] = []
    skipped: list[str] = []
    timestamp = start_timestamp
    for word in lexicon:
        w = word.lower()
        if w in vocab:
            ops.append(FeedbackOp(scope="task", op="remove", word=w, timestamp=timestamp))
            timestamp += 1
        else:
            skipped.append(w)
    return ops, skipped


def word_attribution_profile(
    model: TextClassifier, data: Dataset, word: str, mode: str = "abs_max"
) -> tuple[float, list[float]]:
    """Mean normalized attribution of a word, plus its per-example means,
    over every example containing it (toward predicted classes)."""
    w = word.lower()
    holders = [ex for ex in data if ex.positions_of(w)]
    if not holders:
        raise ValidationError(f"no example contains the word {word!r}")
    logits = predict_logits(model, holders)
    classes = [int(np.argmax(row)) for row in logits]
    normed = normalized_batch(model, holders, classes, mode=mode)
    per_example = []
    for ex, na in zip(holders, normed):
        positions = ex.positions_of(w)
        per_example.append(float(np.mean([na.scores[p] for p in positions])))
    return float(np.mean(per_example)), per_example


# ---------------------------------------------------------------------------
# policy sweep


@dataclass(frozen=True)
class SweepCell:
    policy: str
    loss: str
    id_accuracy: float | None
    ood_accuracies: tuple[float, ...]
    error: str | None = None
    report: DebugReport | None = None


@dataclass
class SweepTable:
    rows: list[SweepCell] = field(default_factory=list)

    @property
    def baseline(self) -> SweepCell:
        return self.rows[0]

    def cell(self, policy: str, loss: str) -> SweepCell:
        for row in self.rows:
            if row.policy == policy and row.loss == loss:
                return row
        raise KeyError((policy, loss))


def run_policy_sweep(
    model: TextClassifier,
    train: Dataset,
    id_eval: Dataset,
    ood_evals: Sequence[Dataset],
    feedback_log: Sequence[FeedbackOp],
    losses: Sequence[str] = ("mse", "mae"),
    policies: Sequence[str] = ("correct_only", "incorrect_only", "all"),
    config: ERConfig = ERConfig(),
) -> SweepTable:
    """One retraining per (policy, loss) cell from the same frozen baseline,
    plus the untouched-baseline row first. A failing cell records its error
    and the sweep continues."""
    table = SweepTable()
    table.rows.append(
        SweepCell(
            policy="none",
            loss="none",
            id_accuracy=evaluate(model, id_eval),
            ood_accuracies=tuple(evaluate(model, o) for o in ood_evals),
        )
    )
    for policy in policies:
        for loss in losses:
            cell_config = replace(config, loss=loss)
            try:
                retrained, report = debug_retrain(
                    model, train, feedback_log, RegularizationPolicy(policy), cell_config
                )
                table.rows.append(
                    SweepCell(
                        policy=policy,
                        loss=loss,
                        id_accuracy=evaluate(retrained, id_eval),
                        ood_accuracies=tuple(evaluate(retrained, o) for o in ood_evals),
                        report=report,
                    )
                )
            except ErloopError as e:
                table.rows.append(
                    SweepCell(
                        policy=policy, loss=loss, id_accuracy=None,
                        ood_accuracies=(), error=str(e),
                    )
                )
    return table


def save_sweep_csv(table: SweepTable, path) -> None:
    n_ood = max((len(r.ood_accuracies) for r in table.rows), default=0)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["policy", "loss", "id_acc"] + [f"ood_acc_{i + 1}" for i in range(n_ood)])
        for row in table.rows:
            cells = [row.policy, row.loss]
            cells.append("" if row.id_accuracy is None else f"{row.id_accuracy:.6f}")
            for i in range(n_ood):
                if i < len(row.ood_accuracies):
                    cells.append(f"{row.ood_accuracies[i]:.6f}")
                else:
                    cells.append(row.error or "")
            writer.writerow(cells)


# ---------------------------------------------------------------------------
# annotation time budgets


@dataclass(frozen=True)
class BudgetPoint:
    method: str
    budget_seconds: float
    instances_annotatable: int
    accuracy: float


DEFAULT_COSTS = {"tool": 60.0, "traditional": 110.0}


def parallel_budget(budget_seconds: float, annotators: int = 2) -> float:
    """Annotators working in parallel multiply the effective budget."""
    return budget_seconds * annotators


def simulate_budget(
    costs: dict[str, float],
    budgets: Sequence[float],
    pipeline: Callable[[int], float],
) -> list[BudgetPoint]:
    """How many instances each method affords per budget, and the accuracy
    a retrain on that much simulated feedback reaches. The pipeline is
    memoized on the instance count."""
    for method, cost in costs.items():
        if cost <= 0:
            raise ValidationError(f"per-instance cost for {method!r} must be positive")
    if any(b < 0 for b in budgets):
        raise ValidationError("budgets must be nonnegative")
    cache: dict[int, float] = {}
    points = []
    for method, cost in costs.items():
        for budget in budgets:
            n = int(budget // cost)
            if n not in cache:
                cache[n] = pipeline(n)
            points.append(
                BudgetPoint(
                    method=method, budget_seconds=float(budget),
                    instances_annotatable=n, accuracy=cache[n],
                )
            )
    return points


def make_budget_pipeline(
    model: TextClassifier,
    train: Dataset,
    rationales: Sequence[RationaleAnnotation],
    ood_eval: Dataset,
    policy: RegularizationPolicy = RegularizationPolicy("all"),
    config: ERConfig = ERConfig(),
    tau: float = 0.5,
) -> Callable[[int], float]:
    """Instance count -> OOD accuracy after retraining on that much
    simulated instance feedback from the given baseline."""
    predictions = predict_dataset(model, train)
    classes = {p.example_id: p.predicted_class for p in predictions}
    by_id = {}
    for start in range(0, len(train), 256):
        chunk = train.examples[start : start + 256]
        for ex, na in zip(
            chunk,
            normalized_batch(model, chunk, [classes[ex.id] for ex in chunk],
                             mode=config.normalization),
        ):
            by_id[ex.id] = na

    def pipeline(n_instances: int) -> float:
        log = simulate_instance_feedback(
            rationales, predictions, train, by_id, n_instances, tau=tau
        )
        if not log:
            return evaluate(model, ood_eval)
        retrained, _ = debug_retrain(model, train, log, policy, config)
        return evaluate(retrained, ood_eval)

    return pipeline


def save_budget_csv(points: Sequence[BudgetPoint], path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "budget_s", "instances", "accuracy"])
        for p in points:
            writer.writerow(
                [p.method, f"{p.budget_seconds:g}", p.instances_annotatable, f"{p.accuracy:.6f}"]
            )
