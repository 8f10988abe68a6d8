"""Per-token importance scores and task-level word rankings.

Scores live in embedding space: token i's score is the dot product of its
embedding vector with the gradient of the chosen class logit with respect
to that vector. The same construction is reused inside retraining, where
the scores stay attached to the graph and are differentiated again.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import Dataset, Example
from .errors import ValidationError
from .model import TextClassifier, logits_from_embeddings, pad_batch, predict_dataset

METHODS = ("input_x_gradient", "integrated_gradients")
NORMALIZATIONS = ("abs_max", "clamp01")


@dataclass(frozen=True)
class Attribution:
    example_id: str
    class_id: int
    scores: np.ndarray
    method: str
    steps: int | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown attribution method {self.method!r}")
        if not np.all(np.isfinite(self.scores)):
            raise ValidationError(f"non-finite attribution for {self.example_id!r}")


@dataclass(frozen=True)
class NormalizedAttribution:
    example_id: str
    class_id: int
    scores: np.ndarray
    method: str
    mode: str
    steps: int | None = None

    def __post_init__(self):
        if self.mode not in NORMALIZATIONS:
            raise ValidationError(f"unknown normalization {self.mode!r}")
        if self.scores.min() < 0.0 or self.scores.max() > 1.0:
            raise ValidationError("normalized scores must lie in [0, 1]")


@dataclass(frozen=True)
class TaskExplanationEntry:
    word: str
    mean_importance: float
    support: tuple[str, ...]


@dataclass(frozen=True)
class TaskExplanation:
    entries: tuple[TaskExplanationEntry, ...]


def scores_graph(emb: Tensor, logits: Tensor, class_weights: np.ndarray, create_graph: bool = False) -> Tensor:
    """Per-position scores [B,L] for the class each row of class_weights selects.

    Rows that select nothing (all-zero weights) get all-zero scores. With
    create_graph=True the result can be differentiated with respect to
    anything the logits depend on.
    """
    selected = ad.tsum(ad.mul(logits, ad.constant(class_weights)))
    g = ad.grad(selected, [emb], create_graph=create_graph)[0]
    return ad.tsum(ad.mul(emb, g), axis=2)


def _check_class(model: TextClassifier, class_id: int) -> None:
    if not 0 <= class_id < model.num_classes:
        raise ValidationError(f"class {class_id} outside [0, {model.num_classes})")


def input_times_gradient_batch(
    model: TextClassifier, examples: Sequence[Example], classes: Sequence[int]
) -> list[Attribution]:
    for c in classes:
        _check_class(model, int(c))
    ids, mask = pad_batch(examples)
    emb = ad.leaf(model.embeddings[ids])
    params = model.param_tensors(requires_grad=False)
    logits = logits_from_embeddings(params, emb, mask, model.nonlinearity)
    weights = np.zeros((len(examples), model.num_classes))
    weights[np.arange(len(examples)), np.asarray(classes, dtype=np.int64)] = 1.0
    scores = scores_graph(emb, logits, weights).data
    return [
        Attribution(
            example_id=ex.id,
            class_id=int(c),
            scores=scores[b, : ex.n].copy(),
            method="input_x_gradient",
        )
        for b, (ex, c) in enumerate(zip(examples, classes))
    ]


def input_times_gradient(model: TextClassifier, example: Example, class_id: int) -> Attribution:
    return input_times_gradient_batch(model, [example], [class_id])[0]


def integrated_gradients(
    model: TextClassifier, example: Example, class_id: int, steps: int = 64
) -> Attribution:
    """Left-Riemann path integral from the zero-embedding baseline."""
    _check_class(model, class_id)
    if steps < 1:
        raise ValidationError("integrated gradients needs at least one step")
    e = model.embeddings[example.token_ids]
    alphas = (np.arange(steps) / steps)[:, None, None]
    emb = ad.leaf(alphas * e[None, :, :])
    params = model.param_tensors(requires_grad=False)
    mask = np.ones((steps, example.n))
    logits = logits_from_embeddings(params, emb, mask, model.nonlinearity)
    weights = np.zeros((steps, model.num_classes))
    weights[:, class_id] = 1.0
    selected = ad.tsum(ad.mul(logits, ad.constant(weights)))
    g = ad.grad(selected, [emb])[0].data
    scores = (e * g.mean(axis=0)).sum(axis=1)
    return Attribution(
        example_id=example.id, class_id=class_id, scores=scores,
        method="integrated_gradients", steps=steps,
    )


def logit_gap(model: TextClassifier, example: Example, class_id: int) -> float:
    """logit_c at the example minus logit_c at the zero-embedding baseline."""
    _check_class(model, class_id)
    params = model.param_tensors(requires_grad=False)
    mask = np.ones((1, example.n))

    def at(emb_values: np.ndarray) -> float:
        logits = logits_from_embeddings(params, ad.constant(emb_values), mask, model.nonlinearity)
        return float(logits.data[0, class_id])

    e = model.embeddings[example.token_ids][None, :, :]
    return at(e) - at(np.zeros_like(e))


def normalize(attr: Attribution, mode: str = "abs_max") -> NormalizedAttribution:
    s = attr.scores
    if mode == "abs_max":
        a = np.abs(s)
        peak = a.max()
        out = np.zeros_like(a) if peak == 0.0 else a / peak
    elif mode == "clamp01":
        lo, hi = s.min(), s.max()
        out = np.full_like(s, 0.5) if hi == lo else (s - lo) / (hi - lo)
    else:
        raise ValidationError(f"unknown normalization {mode!r}")
    return NormalizedAttribution(
        example_id=attr.example_id, class_id=attr.class_id, scores=out,
        method=attr.method, mode=mode, steps=attr.steps,
    )


def normalized_batch(
    model: TextClassifier,
    examples: Sequence[Example],
    classes: Sequence[int],
    method: str = "input_x_gradient",
    mode: str = "abs_max",
    steps: int = 64,
) -> list[NormalizedAttribution]:
    if method == "input_x_gradient":
        attrs = input_times_gradient_batch(model, examples, classes)
    elif method == "integrated_gradients":
        attrs = [
            integrated_gradients(model, ex, int(c), steps=steps)
            for ex, c in zip(examples, classes)
        ]
    else:
        raise ValidationError(f"unknown attribution method {method!r}")
    return [normalize(a, mode) for a in attrs]


def build_task_explanation(
    model: TextClassifier,
    data: Dataset,
    method: str = "input_x_gradient",
    top_k: int = 50,
    normalization: str = "abs_max",
    steps: int = 64,
    predictions=None,
    batch_size: int = 128,
) -> TaskExplanation:
    """Rank words by mean normalized attribution toward each example's
    predicted class, over every occurrence in every example containing them.
    """
    if len(data) == 0:
        raise ValidationError("cannot explain an empty dataset")
    if top_k < 0:
        raise ValidationError("top_k must be nonnegative")
    if predictions is None:
        predictions = predict_dataset(model, data)
    classes = {p.example_id: p.predicted_class for p in predictions}
    totals: dict[str, float] = {}
    counts: dict[str, int] = {}
    support: dict[str, list[str]] = {}
    for start in range(0, len(data), batch_size):
        chunk = data.examples[start : start + batch_size]
        normed = normalized_batch(
            model, chunk, [classes[ex.id] for ex in chunk],
            method=method, mode=normalization, steps=steps,
        )
        for ex, na in zip(chunk, normed):
            for pos, token in enumerate(ex.raw_tokens):
                word = token.lower()
                totals[word] = totals.get(word, 0.0) + float(na.scores[pos])
                counts[word] = counts.get(word, 0) + 1
                ids = support.setdefault(word, [])
                # examples arrive in dataset order, so repeats are consecutive
                if not ids or ids[-1] != ex.id:
                    ids.append(ex.id)
    entries = [
        TaskExplanationEntry(
            word=w, mean_importance=totals[w] / counts[w], support=tuple(support[w])
        )
        for w in totals
    ]
    entries.sort(key=lambda e: (-e.mean_importance, e.word))
    return TaskExplanation(entries=tuple(entries[:top_k]))


def save_attributions(attrs: Iterable[Attribution | NormalizedAttribution], path) -> None:
    with Path(path).open("w") as fh:
        for a in attrs:
            fh.write(
                json.dumps(
                    {
                        "example_id": a.example_id,
                        "class": a.class_id,
                        "method": a.method,
                        "scores": [float(x) for x in a.scores],
                    }
                )
                + "\n"
            )


def save_task_explanation(te: TaskExplanation, path) -> None:
    payload = {
        "entries": [
            {
                "word": e.word,
                "mean_importance": e.mean_importance,
                "support": list(e.support),
            }
            for e in te.entries
        ]
    }
    Path(path).write_text(json.dumps(payload, indent=2))
