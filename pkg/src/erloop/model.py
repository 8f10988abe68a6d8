"""The reference differentiable text classifier.

Architecture: embedding lookup, mean pool over tokens, one smooth hidden
layer, linear output head. Two forward paths exist on purpose:

* prediction path (`predict_logits`): pools via a token-count matrix
  product, so logits are bitwise identical under any permutation of
  token order;
* graph path (`logits_graph` / `logits_from_embeddings`): keeps one
  embedding vector per token position so gradients with respect to
  individual token embeddings exist. Attribution and training run here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import Dataset, Example
from .errors import ValidationError

NONLINEARITIES = ("tanh", "identity")

PARAM_ORDER = ("embeddings", "w_hidden", "b_hidden", "w_out", "b_out")


@dataclass
class TextClassifier:
    """Parameter container; all arrays are float64."""

    embeddings: np.ndarray
    w_hidden: np.ndarray
    b_hidden: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray
    nonlinearity: str = "tanh"

    @classmethod
    def init(
        cls,
        vocab_size: int,
        num_classes: int,
        embedding_dim: int = 32,
        hidden_dim: int = 32,
        seed: int = 0,
        nonlinearity: str = "tanh",
    ) -> "TextClassifier":
        if nonlinearity not in NONLINEARITIES:
            raise ValidationError(f"unknown nonlinearity {nonlinearity!r}")
        rng = np.random.default_rng(seed)
        return cls(
            embeddings=rng.normal(0.0, 0.1, size=(vocab_size, embedding_dim)),
            w_hidden=rng.normal(0.0, 1.0 / math.sqrt(embedding_dim), size=(embedding_dim, hidden_dim)),
            b_hidden=np.zeros(hidden_dim),
            w_out=rng.normal(0.0, 1.0 / math.sqrt(hidden_dim), size=(hidden_dim, num_classes)),
            b_out=np.zeros(num_classes),
            nonlinearity=nonlinearity,
        )

    @property
    def vocab_size(self) -> int:
        return self.embeddings.shape[0]

    @property
    def embedding_dim(self) -> int:
        return self.embeddings.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w_hidden.shape[1]

    @property
    def num_classes(self) -> int:
        return self.b_out.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_ORDER}

    def param_tensors(self, requires_grad: bool = True) -> dict[str, Tensor]:
        wrap = ad.leaf if requires_grad else ad.constant
        return {name: wrap(arr) for name, arr in self.params().items()}

    def copy(self) -> "TextClassifier":
        return replace(self, **{name: arr.copy() for name, arr in self.params().items()})

    def validate(self) -> None:
        for name, arr in self.params().items():
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"parameter {name} contains non-finite values")
        if self.nonlinearity not in NONLINEARITIES:
            raise ValidationError(f"unknown nonlinearity {self.nonlinearity!r}")


@dataclass(frozen=True)
class Prediction:
    example_id: str
    logits: np.ndarray
    predicted_class: int
    correct: bool


def pad_batch(examples: Sequence[Example], pad_id: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad token ids to a rectangle; mask is 1.0 on real tokens."""
    n_max = max(ex.n for ex in examples)
    ids = np.full((len(examples), n_max), pad_id, dtype=np.int64)
    mask = np.zeros((len(examples), n_max))
    for b, ex in enumerate(examples):
        ids[b, : ex.n] = ex.token_ids
        mask[b, : ex.n] = 1.0
    return ids, mask


def _apply_nonlinearity(z: Tensor, kind: str) -> Tensor:
    if kind == "tanh":
        return ad.tanh(z)
    if kind == "identity":
        return z
    raise ValidationError(f"unknown nonlinearity {kind!r}")


def logits_from_embeddings(
    params: dict[str, Tensor],
    emb: Tensor,
    mask: np.ndarray,
    nonlinearity: str = "tanh",
) -> Tensor:
    """Logits [B,C] from per-position embeddings [B,L,d] and a validity mask [B,L].

    Padded positions are zeroed by the mask before pooling, so they get
    exactly zero gradient.
    """
    lengths = mask.sum(axis=1, keepdims=True)
    masked = ad.mul(emb, ad.constant(mask[:, :, None]))
    pooled = ad.div(ad.tsum(masked, axis=1), ad.constant(lengths))
    hidden = _apply_nonlinearity(
        ad.add(ad.matmul(pooled, params["w_hidden"]), params["b_hidden"]), nonlinearity
    )
    return ad.add(ad.matmul(hidden, params["w_out"]), params["b_out"])


def logits_graph(
    params: dict[str, Tensor],
    ids: np.ndarray,
    mask: np.ndarray,
    nonlinearity: str = "tanh",
) -> tuple[Tensor, Tensor]:
    """Full graph from the embedding table; returns (logits, gathered embeddings)."""
    emb = ad.gather(params["embeddings"], ids)
    return logits_from_embeddings(params, emb, mask, nonlinearity), emb


def token_counts(examples: Sequence[Example], vocab_size: int) -> np.ndarray:
    counts = np.zeros((len(examples), vocab_size))
    for b, ex in enumerate(examples):
        np.add.at(counts[b], ex.token_ids, 1.0)
    return counts


def predict_logits(model: TextClassifier, examples: Sequence[Example]) -> np.ndarray:
    """Logits [B,C], exactly invariant to token order within each example."""
    counts = token_counts(examples, model.vocab_size)
    lengths = np.array([[float(ex.n)] for ex in examples])
    pooled = (counts @ model.embeddings) / lengths
    z = pooled @ model.w_hidden + model.b_hidden
    hidden = np.tanh(z) if model.nonlinearity == "tanh" else z
    return hidden @ model.w_out + model.b_out


def forward(model: TextClassifier, example: Example) -> Prediction:
    if example.token_ids.max() >= model.vocab_size or example.token_ids.min() < 0:
        raise IndexError(f"example {example.id!r} has token ids outside the embedding table")
    logits = predict_logits(model, [example])[0]
    if not np.all(np.isfinite(logits)):
        raise ValidationError(f"non-finite logits for example {example.id!r}")
    p = int(np.argmax(logits))
    return Prediction(example_id=example.id, logits=logits, predicted_class=p, correct=p == example.label)


def predict_dataset(model: TextClassifier, data: Dataset, batch_size: int = 256) -> list[Prediction]:
    preds: list[Prediction] = []
    for start in range(0, len(data), batch_size):
        chunk = data.examples[start : start + batch_size]
        logits = predict_logits(model, chunk)
        for ex, row in zip(chunk, logits):
            p = int(np.argmax(row))
            preds.append(
                Prediction(example_id=ex.id, logits=row, predicted_class=p, correct=p == ex.label)
            )
    return preds
