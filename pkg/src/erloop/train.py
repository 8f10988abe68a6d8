"""Mini-batch gradient descent on cross-entropy, with an optional per-batch
regularization term hook.

Baseline training and debugging retrains share one loop (`run_sgd`). A batch
whose regularization context is empty takes the plain cross-entropy path, so
a run with strength 0 or no live feedback performs the exact same floating
point operations as baseline training and reproduces it bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import Dataset, Example
from .errors import DivergenceError, ValidationError
from .model import PARAM_ORDER, TextClassifier, logits_graph, pad_batch, predict_dataset, predict_logits

# er context: example id -> (attribution class, {position -> target value})
ErContext = dict[str, tuple[int, dict[int, float]]]
# builds the regularization term for one batch, or None when it has no targets
BatchTermFn = Callable[[Tensor, Tensor, Sequence[Example], np.ndarray], "Tensor | None"]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    learning_rate: float = 0.1
    batch_size: int = 32
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 0:
            raise ValidationError("epochs must be nonnegative")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be at least 1")


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), num_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def cross_entropy_graph(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy over the batch, numerically stable.

    The row-max shift is detached, which leaves the value exact and the
    gradient equal to softmax minus one-hot.
    """
    batch, num_classes = logits.data.shape
    shift = logits.data.max(axis=1, keepdims=True)
    z = ad.sub(logits, ad.constant(shift))
    lse = ad.add(ad.log(ad.tsum(ad.exp(z), axis=1, keepdims=True)), ad.constant(shift))
    picked = ad.tsum(
        ad.mul(logits, ad.constant(one_hot(labels, num_classes))), axis=1, keepdims=True
    )
    total = ad.tsum(ad.sub(lse, picked))
    return ad.div(total, ad.constant(float(batch)))


def sgd_step(
    model: TextClassifier,
    batch: Sequence[Example],
    learning_rate: float,
    strength: float = 0.0,
    batch_term: BatchTermFn | None = None,
) -> tuple[float, float]:
    """One in-place parameter update; returns (task loss, regularizer loss)."""
    params = model.param_tensors()
    ids, mask = pad_batch(batch)
    labels = np.array([ex.label for ex in batch], dtype=np.int64)
    logits, emb = logits_graph(params, ids, mask, model.nonlinearity)
    task = cross_entropy_graph(logits, labels)
    extra = batch_term(logits, emb, batch, mask) if batch_term is not None else None
    if extra is None:
        joint = task
        extra_value = 0.0
    else:
        joint = ad.add(task, ad.mul(ad.constant(strength), extra))
        extra_value = extra.item()
    grads = ad.grad(joint, [params[name] for name in PARAM_ORDER])
    for name, g in zip(PARAM_ORDER, grads):
        getattr(model, name)[...] -= learning_rate * g.data
    return task.item(), extra_value


def run_sgd(
    model: TextClassifier,
    train: Dataset,
    epochs: int,
    learning_rate: float,
    batch_size: int,
    seed: int,
    epoch_term: Callable[[int, TextClassifier], BatchTermFn | None] | None = None,
    strength: float = 0.0,
) -> tuple[list[float], list[float]]:
    """Train in place for the given epochs; returns per-epoch loss histories.

    epoch_term is called once per epoch before the batch order is drawn and
    must not consume the training RNG.
    """
    rng = np.random.default_rng(seed)
    n = len(train)
    task_history: list[float] = []
    extra_history: list[float] = []
    for epoch in range(epochs):
        batch_term = epoch_term(epoch, model) if epoch_term is not None else None
        order = rng.permutation(n)
        task_sum = 0.0
        extra_sum = 0.0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            batch = [train.examples[i] for i in idx]
            task_value, extra_value = sgd_step(
                model, batch, learning_rate, strength=strength, batch_term=batch_term
            )
            if not (np.isfinite(task_value) and np.isfinite(extra_value)):
                raise DivergenceError(
                    f"non-finite loss in epoch {epoch} (task={task_value}, reg={extra_value})"
                )
            task_sum += task_value * len(batch)
            extra_sum += extra_value * len(batch)
        task_history.append(task_sum / n)
        extra_history.append(extra_sum / n)
    return task_history, extra_history


def train_baseline(model: TextClassifier, train: Dataset, config: TrainConfig) -> TextClassifier:
    """Cross-entropy training on a copy; the input model is left untouched."""
    if len(train) == 0:
        raise ValidationError("cannot train on an empty dataset")
    config.validate()
    work = model.copy()
    run_sgd(
        work,
        train,
        epochs=config.epochs,
        learning_rate=config.learning_rate,
        batch_size=config.batch_size,
        seed=config.seed,
    )
    return work


def evaluate(model: TextClassifier, data: Dataset) -> float:
    """Fraction of examples whose predicted class equals the gold label."""
    if len(data) == 0:
        raise ValidationError("cannot evaluate on an empty dataset")
    preds = predict_dataset(model, data)
    return sum(1 for p in preds if p.correct) / len(preds)


def dataset_cross_entropy(model: TextClassifier, data: Dataset, batch_size: int = 256) -> float:
    """Mean cross-entropy of the whole dataset under the prediction path."""
    if len(data) == 0:
        raise ValidationError("cannot score an empty dataset")
    total = 0.0
    for start in range(0, len(data), batch_size):
        chunk = data.examples[start : start + batch_size]
        logits = predict_logits(model, chunk)
        labels = np.array([ex.label for ex in chunk])
        shift = logits.max(axis=1, keepdims=True)
        lse = np.log(np.exp(logits - shift).sum(axis=1)) + shift[:, 0]
        total += float((lse - logits[np.arange(len(chunk)), labels]).sum())
    return total / len(data)
