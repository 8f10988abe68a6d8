"""Dataset ingestion, tokenization, and vocabulary handling.

Dataset files are JSONL, one object per line:
    {"id": str, "text": str, "label": int}            (whitespace-tokenized, lowercased)
    {"id": str, "tokens": [str, ...], "label": int}   (tokens taken verbatim)
with a sidecar manifest {"num_classes": C, "labels": [str, ...]}.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import IngestionError, ValidationError

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

SPLIT_TAGS = ("train", "id_eval", "ood_eval")


def tokenize(text: str) -> list[str]:
    """Whitespace tokens, lowercased."""
    return text.lower().split()


@dataclass(frozen=True)
class Vocabulary:
    """Dense token<->id mapping with reserved pad and unknown entries."""

    tokens: tuple[str, ...]
    index: dict[str, int]
    pad_id: int
    unk_id: int

    @classmethod
    def from_tokens(cls, ordered: Sequence[str]) -> "Vocabulary":
        tokens = (PAD_TOKEN, UNK_TOKEN) + tuple(
            t for t in ordered if t not in (PAD_TOKEN, UNK_TOKEN)
        )
        index = {t: i for i, t in enumerate(tokens)}
        return cls(tokens=tokens, index=index, pad_id=0, unk_id=1)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def id_for(self, token: str) -> int:
        return self.index.get(token, self.unk_id)

    def encode(self, raw_tokens: Sequence[str]) -> np.ndarray:
        return np.array([self.id_for(t) for t in raw_tokens], dtype=np.int64)

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.tokens[int(i)] for i in ids]


def build_vocabulary(corpus, min_count: int = 1) -> Vocabulary:
    """Vocabulary over a dataset or an iterable of token sequences.

    Tokens with count >= min_count are kept, ordered by descending count then
    lexicographically, after the reserved pad/unknown entries. Occurrences of
    the reserved strings themselves are not double-counted.
    """
    sequences = _token_sequences(corpus)
    counts: Counter[str] = Counter()
    n_seq = 0
    for seq in sequences:
        n_seq += 1
        counts.update(seq)
    if n_seq == 0:
        raise IngestionError("cannot build a vocabulary from an empty corpus")
    counts.pop(PAD_TOKEN, None)
    counts.pop(UNK_TOKEN, None)
    kept = sorted(
        (t for t, c in counts.items() if c >= min_count),
        key=lambda t: (-counts[t], t),
    )
    return Vocabulary.from_tokens(kept)


def _token_sequences(corpus) -> Iterator[Sequence[str]]:
    if isinstance(corpus, Dataset):
        return (ex.raw_tokens for ex in corpus.examples)
    return iter(corpus)


@dataclass(frozen=True, eq=False)
class Example:
    """One tokenized, labeled instance."""

    id: str
    token_ids: np.ndarray
    raw_tokens: tuple[str, ...]
    label: int

    def __post_init__(self):
        if len(self.raw_tokens) == 0:
            raise ValidationError(f"example {self.id!r} has no tokens")
        if len(self.token_ids) != len(self.raw_tokens):
            raise ValidationError(
                f"example {self.id!r}: token_ids and raw_tokens lengths differ"
            )
        if self.label < 0:
            raise ValidationError(f"example {self.id!r}: negative label")

    @property
    def n(self) -> int:
        return len(self.raw_tokens)

    def positions_of(self, word: str) -> list[int]:
        """Positions whose token matches the word, compared lowercased."""
        w = word.lower()
        return [i for i, t in enumerate(self.raw_tokens) if t.lower() == w]


@dataclass
class Dataset:
    """A list of examples plus the class count and split identity."""

    examples: list[Example]
    num_classes: int
    split_tag: str = "train"
    by_id: dict[str, Example] = field(init=False, repr=False)

    def __post_init__(self):
        if self.split_tag not in SPLIT_TAGS:
            raise ValidationError(f"unknown split_tag {self.split_tag!r}")
        self.by_id = {}
        for ex in self.examples:
            if ex.id in self.by_id:
                raise ValidationError(f"duplicate example id {ex.id!r}")
            if ex.label >= self.num_classes:
                raise ValidationError(
                    f"example {ex.id!r}: label {ex.label} outside "
                    f"[0, {self.num_classes})"
                )
            self.by_id[ex.id] = ex

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self) -> Iterator[Example]:
        return iter(self.examples)

    def example(self, example_id: str) -> Example:
        return self.by_id[example_id]


def load_manifest(path: str | Path) -> tuple[int, list[str]]:
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"manifest not found: {path}")
    obj = json.loads(path.read_text())
    num_classes = obj.get("num_classes")
    if not isinstance(num_classes, int) or num_classes < 2:
        raise IngestionError(f"manifest {path}: num_classes must be an int >= 2")
    return num_classes, list(obj.get("labels", []))


def load_dataset(
    path: str | Path,
    manifest_path: str | Path | None = None,
    vocab: Vocabulary | None = None,
    split_tag: str = "train",
) -> Dataset:
    """Read a JSONL dataset file.

    Token ids are encoded against the provided vocabulary; without one, a
    vocabulary is built from this file's own tokens (min_count=1), which is
    the deterministic same as build_vocabulary on the loaded dataset.
    """
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"dataset not found: {path}")
    if manifest_path is None:
        manifest_path = path.parent / "manifest.json"
    num_classes, _ = load_manifest(manifest_path)

    rows: list[tuple[str, list[str], int]] = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise IngestionError(f"{path} line {lineno}: invalid JSON ({e})")
            try:
                ex_id = obj["id"]
                label = obj["label"]
                if "tokens" in obj:
                    raw = list(obj["tokens"])
                else:
                    raw = tokenize(obj["text"])
            except (KeyError, TypeError, AttributeError) as e:
                raise IngestionError(f"{path} line {lineno}: bad record ({e})")
            if not isinstance(ex_id, str) or not isinstance(label, int):
                raise ValidationError(
                    f"{path} line {lineno}: id must be a string and label an integer"
                )
            if not raw:
                raise ValidationError(f"{path} line {lineno}: example has no tokens")
            if label < 0 or label >= num_classes:
                raise ValidationError(
                    f"{path} line {lineno}: label {label} outside [0, {num_classes})"
                )
            rows.append((ex_id, raw, label))

    if not rows:
        raise IngestionError(f"{path}: dataset file is empty")
    if vocab is None:
        vocab = build_vocabulary([raw for _, raw, _ in rows], min_count=1)
    examples = [
        Example(id=ex_id, token_ids=vocab.encode(raw), raw_tokens=tuple(raw), label=label)
        for ex_id, raw, label in rows
    ]
    return Dataset(examples=examples, num_classes=num_classes, split_tag=split_tag)


def encode_dataset(data: Dataset, vocab: Vocabulary) -> Dataset:
    """Re-encode a dataset's token ids against another vocabulary."""
    examples = [
        Example(
            id=ex.id,
            token_ids=vocab.encode(ex.raw_tokens),
            raw_tokens=ex.raw_tokens,
            label=ex.label,
        )
        for ex in data.examples
    ]
    return Dataset(examples=examples, num_classes=data.num_classes, split_tag=data.split_tag)


def save_dataset(data: Dataset, path: str | Path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        for ex in data.examples:
            fh.write(
                json.dumps({"id": ex.id, "tokens": list(ex.raw_tokens), "label": ex.label})
                + "\n"
            )


def save_manifest(num_classes: int, labels: Sequence[str], path: str | Path) -> None:
    Path(path).write_text(json.dumps({"num_classes": num_classes, "labels": list(labels)}))
