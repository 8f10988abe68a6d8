"""Retraining against feedback: cross-entropy plus an attribution penalty.

The penalty pulls each targeted token's normalized attribution toward its
target value (0 for removed words, 1 for added ones). Attributions are
themselves gradients, so the penalty's parameter gradient is a second
derivative; the whole joint step runs through the same graph machinery as
plain training and reduces to it exactly when the penalty is inactive.
"""

from __future__ import annotations

import json
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .attribution import NormalizedAttribution, normalized_batch, scores_graph
from .data import Dataset, Example, Vocabulary
from .errors import ConsistencyError, FormatError, ValidationError
from .feedback import (
    FeedbackOp,
    RegularizationPolicy,
    TargetMap,
    apply_feedback,
    build_targets,
)
from .model import PARAM_ORDER, TextClassifier, predict_dataset, predict_logits
from .train import ErContext, evaluate, run_sgd

ER_LOSSES = ("mse", "mae")

# keeps a just-normalized maximum from dividing by zero on all-zero rows
PEAK_FLOOR = 1e-12


@dataclass(frozen=True)
class ERConfig:
    loss: str = "mse"
    strength: float = 1.0
    epochs: int = 10
    learning_rate: float = 0.1
    batch_size: int = 32
    seed: int = 0
    attribution_method: str = "input_x_gradient"
    normalization: str = "abs_max"
    target_rebuild_every: int = 1

    def validate(self) -> None:
        if self.loss not in ER_LOSSES:
            raise ValidationError(f"unknown regularization loss {self.loss!r}")
        if self.strength < 0:
            raise ValidationError("strength must be nonnegative")
        if self.epochs < 0:
            raise ValidationError("epochs must be nonnegative")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be at least 1")
        if self.attribution_method != "input_x_gradient":
            raise ValidationError("only input_x_gradient can be trained through")
        if self.normalization != "abs_max":
            raise ValidationError("only abs_max normalization is trainable")
        if self.target_rebuild_every < 1:
            raise ValidationError("target_rebuild_every must be at least 1")


@dataclass
class DebugReport:
    epochs_run: int = 0
    final_task_loss: float | None = None
    final_er_loss: float | None = None
    task_loss_history: list[float] = field(default_factory=list)
    er_loss_history: list[float] = field(default_factory=list)
    pre_id_accuracy: float | None = None
    post_id_accuracy: float | None = None
    pre_ood_accuracy: float | None = None
    post_ood_accuracy: float | None = None
    pre_target_attribution: float | None = None
    post_target_attribution: float | None = None
    display_method: str = "input_x_gradient"
    training_method: str = "input_x_gradient"

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "DebugReport":
        return cls(**obj)


def er_loss(attr: NormalizedAttribution, targets: dict[int, float], kind: str = "mse") -> float:
    """Distance between normalized scores and targets, averaged over the
    targeted positions only. No targets means no penalty."""
    if kind not in ER_LOSSES:
        raise ValidationError(f"unknown regularization loss {kind!r}")
    if not targets:
        return 0.0
    n = len(attr.scores)
    diffs = []
    for pos, t in targets.items():
        if not 0 <= pos < n:
            raise ConsistencyError(f"target position {pos} outside example of length {n}")
        diffs.append(float(attr.scores[pos]) - t)
    d = np.array(diffs)
    return float((d**2).mean() if kind == "mse" else np.abs(d).mean())


def batch_er_term(
    logits: Tensor,
    emb: Tensor,
    batch: Sequence[Example],
    mask: np.ndarray,
    er_ctx: ErContext,
    loss_kind: str,
    num_classes: int,
) -> Tensor | None:
    """Graph node for the batch's attribution penalty, or None when no
    example in the batch is targeted.

    Per targeted example: normalize the input-times-gradient scores by
    their absolute maximum, then average the chosen distance over the
    targeted positions. The batch term is the sum over examples divided by
    the batch size, matching how cross-entropy is averaged.
    """
    n_batch, n_pos = mask.shape
    class_weights = np.zeros((n_batch, num_classes))
    weight = np.zeros((n_batch, n_pos))
    target = np.zeros((n_batch, n_pos))
    hit = False
    for b, ex in enumerate(batch):
        ctx = er_ctx.get(ex.id)
        if ctx is None:
            continue
        class_id, positions = ctx
        if not positions:
            continue
        hit = True
        class_weights[b, class_id] = 1.0
        for pos, t in positions.items():
            if not 0 <= pos < ex.n:
                raise ConsistencyError(
                    f"target position {pos} outside example {ex.id!r} of length {ex.n}"
                )
            weight[b, pos] = 1.0
            target[b, pos] = t
    if not hit:
        return None
    scores = scores_graph(emb, logits, class_weights, create_graph=True)
    magnitude = ad.tabs(scores)
    # The per-example scale is a stop-gradient constant. Differentiating
    # through the maximum would zero the penalty's gradient exactly at the
    # position holding the maximum (phi is locally constant 1 there), so a
    # token that dominates its example could never be pushed down. Freezing
    # the scale keeps the loss value identical and restores a descent
    # direction at every targeted position.
    peak = ad.constant(
        np.maximum(magnitude.data.max(axis=1, keepdims=True), PEAK_FLOOR)
    )
    phi = ad.div(magnitude, peak)
    diff = ad.sub(phi, ad.constant(target))
    per_pos = ad.mul(diff, diff) if loss_kind == "mse" else ad.tabs(diff)
    weighted = ad.mul(per_pos, ad.constant(weight))
    counts = np.maximum(weight.sum(axis=1, keepdims=True), 1.0)
    per_example = ad.div(ad.tsum(weighted, axis=1, keepdims=True), ad.constant(counts))
    return ad.div(ad.tsum(per_example), ad.constant(float(n_batch)))


def _epoch_context(
    model: TextClassifier,
    train: Dataset,
    state,
    policy: RegularizationPolicy,
) -> ErContext | None:
    """Fresh predictions, fresh targets; None when nothing is targeted."""
    preds = predict_dataset(model, train)
    targets = build_targets(state, preds, train, policy)
    if len(targets) == 0:
        return None
    classes = {p.example_id: p.predicted_class for p in preds}
    return {
        example_id: (classes[example_id], positions)
        for example_id, positions in targets.by_example().items()
    }


def mean_target_attribution(
    model: TextClassifier,
    train: Dataset,
    watched: dict[str, dict[int, float]],
    config: ERConfig,
) -> float | None:
    """Mean normalized attribution over a fixed set of (example, position)
    pairs, attributed to the model's current predicted classes."""
    if not watched:
        return None
    examples = [train.example(example_id) for example_id in sorted(watched)]
    logits = predict_logits(model, examples)
    classes = [int(np.argmax(row)) for row in logits]
    normed = normalized_batch(
        model, examples, classes, method=config.attribution_method, mode=config.normalization
    )
    values = []
    for ex, na in zip(examples, normed):
        for pos in sorted(watched[ex.id]):
            values.append(float(na.scores[pos]))
    return float(np.mean(values)) if values else None


def debug_retrain(
    model: TextClassifier,
    train: Dataset,
    feedback_log: Sequence[FeedbackOp],
    policy: RegularizationPolicy,
    config: ERConfig,
    id_eval: Dataset | None = None,
    ood_eval: Dataset | None = None,
) -> tuple[TextClassifier, DebugReport]:
    """Continue training the model under the joint objective; the input
    model is left untouched and returned unchanged on divergence."""
    config.validate()
    model.validate()
    if len(train) == 0:
        raise ValidationError("cannot retrain on an empty dataset")
    state = apply_feedback(feedback_log)
    work = model.copy()
    report = DebugReport()

    initial_preds = predict_dataset(model, train)
    initial_targets = (
        build_targets(state, initial_preds, train, policy) if state else TargetMap()
    )
    watched = initial_targets.by_example()
    report.pre_target_attribution = mean_target_attribution(model, train, watched, config)
    if id_eval is not None:
        report.pre_id_accuracy = evaluate(model, id_eval)
    if ood_eval is not None:
        report.pre_ood_accuracy = evaluate(model, ood_eval)

    active = bool(state) and config.strength > 0.0
    if active:
        cache: dict[str, ErContext | None] = {"ctx": None}

        def epoch_term(epoch: int, current: TextClassifier):
            if epoch % config.target_rebuild_every == 0:
                cache["ctx"] = _epoch_context(current, train, state, policy)
            ctx = cache["ctx"]
            if not ctx:
                return None

            def term(logits, emb, batch, mask):
                return batch_er_term(
                    logits, emb, batch, mask, ctx, config.loss, current.num_classes
                )

            return term

        task_hist, er_hist = run_sgd(
            work,
            train,
            epochs=config.epochs,
            learning_rate=config.learning_rate,
            batch_size=config.batch_size,
            seed=config.seed,
            epoch_term=epoch_term,
            strength=config.strength,
        )
    else:
        task_hist, er_hist = run_sgd(
            work,
            train,
            epochs=config.epochs,
            learning_rate=config.learning_rate,
            batch_size=config.batch_size,
            seed=config.seed,
        )

    report.epochs_run = config.epochs
    report.task_loss_history = task_hist
    report.er_loss_history = er_hist
    report.final_task_loss = task_hist[-1] if task_hist else None
    report.final_er_loss = er_hist[-1] if er_hist else None
    report.post_target_attribution = mean_target_attribution(work, train, watched, config)
    if id_eval is not None:
        report.post_id_accuracy = evaluate(work, id_eval)
    if ood_eval is not None:
        report.post_ood_accuracy = evaluate(work, ood_eval)
    return work, report


# ---------------------------------------------------------------------------
# model archive

ARCHIVE_MANIFEST = "manifest.json"
ARCHIVE_VOCABULARY = "vocabulary.txt"
ARCHIVE_PARAMETERS = "parameters.bin"
ARCHIVE_VERSION = 1
# fixed timestamp so identical models export identical bytes
_ARCHIVE_STAMP = (1980, 1, 1, 0, 0, 0)


def _param_shapes(d: int, h: int, c: int, v: int) -> list[tuple[str, tuple[int, ...]]]:
    return [
        ("embeddings", (v, d)),
        ("w_hidden", (d, h)),
        ("b_hidden", (h,)),
        ("w_out", (h, c)),
        ("b_out", (c,)),
    ]


def export_model(
    model: TextClassifier, vocab: Vocabulary, path, normalization: str = "abs_max"
) -> Path:
    model.validate()
    if len(vocab) != model.vocab_size:
        raise ValidationError(
            f"vocabulary size {len(vocab)} does not match embedding table {model.vocab_size}"
        )
    manifest = {
        "format_version": ARCHIVE_VERSION,
        "embedding_dim": model.embedding_dim,
        "hidden_dim": model.hidden_dim,
        "num_classes": model.num_classes,
        "vocab_size": model.vocab_size,
        "nonlinearity": model.nonlinearity,
        "normalization": normalization,
    }
    blob = b"".join(
        np.ascontiguousarray(getattr(model, name), dtype="<f8").tobytes()
        for name in PARAM_ORDER
    )
    path = Path(path)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, payload in (
            (ARCHIVE_MANIFEST, json.dumps(manifest, sort_keys=True).encode()),
            (ARCHIVE_VOCABULARY, "\n".join(vocab.tokens).encode()),
            (ARCHIVE_PARAMETERS, blob),
        ):
            info = zipfile.ZipInfo(name, date_time=_ARCHIVE_STAMP)
            zf.writestr(info, payload)
    return path


def load_model(path) -> tuple[TextClassifier, Vocabulary]:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"model archive not found: {path}")
    try:
        zf = zipfile.ZipFile(path)
    except zipfile.BadZipFile as e:
        raise FormatError(f"{path} is not a model archive ({e})")
    with zf:
        names = set(zf.namelist())
        for required in (ARCHIVE_MANIFEST, ARCHIVE_VOCABULARY, ARCHIVE_PARAMETERS):
            if required not in names:
                raise FormatError(f"{path}: missing archive member {required!r}")
        manifest = json.loads(zf.read(ARCHIVE_MANIFEST))
        if manifest.get("format_version") != ARCHIVE_VERSION:
            raise FormatError(f"{path}: unsupported format_version {manifest.get('format_version')}")
        d = manifest["embedding_dim"]
        h = manifest["hidden_dim"]
        c = manifest["num_classes"]
        v = manifest["vocab_size"]
        tokens = zf.read(ARCHIVE_VOCABULARY).decode().split("\n")
        if len(tokens) != v:
            raise FormatError(f"{path}: vocabulary lists {len(tokens)} tokens, manifest says {v}")
        if tokens[:2] != ["<pad>", "<unk>"]:
            raise FormatError(f"{path}: vocabulary must start with the reserved tokens")
        blob = zf.read(ARCHIVE_PARAMETERS)
    arrays = {}
    offset = 0
    for name, shape in _param_shapes(d, h, c, v):
        size = int(np.prod(shape)) * 8
        section = blob[offset : offset + size]
        if len(section) < size:
            raise FormatError(f"{path}: parameter blob truncated in section {name!r}")
        arrays[name] = np.frombuffer(section, dtype="<f8").reshape(shape).copy()
        offset += size
    if offset != len(blob):
        raise FormatError(f"{path}: {len(blob) - offset} trailing bytes after parameters")
    model = TextClassifier(nonlinearity=manifest["nonlinearity"], **arrays)
    model.validate()
    vocab = Vocabulary(tokens=tuple(tokens), index={t: i for i, t in enumerate(tokens)}, pad_id=0, unk_id=1)
    return model, vocab
