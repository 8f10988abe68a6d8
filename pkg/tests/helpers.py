"""Shared builders for test datasets and models."""

import numpy as np

from erloop.data import Dataset, Example, Vocabulary, build_vocabulary
from erloop.model import TextClassifier


def dataset_from_tokens(rows, num_classes=2, vocab=None, split_tag="train"):
    """rows: list of (id, token list, label). Returns (Dataset, Vocabulary)."""
    if vocab is None:
        vocab = build_vocabulary([tokens for _, tokens, _ in rows])
    examples = [
        Example(id=ex_id, token_ids=vocab.encode(tokens), raw_tokens=tuple(tokens), label=label)
        for ex_id, tokens, label in rows
    ]
    return Dataset(examples=examples, num_classes=num_classes, split_tag=split_tag), vocab


def random_dataset(rng, n_examples, word_pool=30, num_classes=2, min_len=2, max_len=9):
    words = [f"w{i:02d}" for i in range(word_pool)]
    rows = []
    for i in range(n_examples):
        length = int(rng.integers(min_len, max_len + 1))
        tokens = list(rng.choice(words, size=length))
        rows.append((f"ex{i:04d}", tokens, int(rng.integers(0, num_classes))))
    return dataset_from_tokens(rows, num_classes=num_classes)


def small_model(vocab, num_classes=2, d=8, h=8, seed=0, nonlinearity="tanh"):
    return TextClassifier.init(
        vocab_size=len(vocab),
        num_classes=num_classes,
        embedding_dim=d,
        hidden_dim=h,
        seed=seed,
        nonlinearity=nonlinearity,
    )


def separable_rows(n_per_class=30, seed=3):
    """Two classes keyed by a dedicated marker word plus shared filler."""
    rng = np.random.default_rng(seed)
    filler = [f"f{i}" for i in range(10)]
    rows = []
    for label, marker in ((0, "alpha"), (1, "beta")):
        for i in range(n_per_class):
            tokens = [marker] + list(rng.choice(filler, size=int(rng.integers(2, 6))))
            rng.shuffle(tokens)
            rows.append((f"{marker}{i}", tokens, label))
    return rows
