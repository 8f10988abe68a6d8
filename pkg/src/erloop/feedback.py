"""Feedback operations and the regularization targets they produce.

A feedback log is an append-only sequence of per-word operations. Folding
the log gives the live feedback state (last write wins per key, reset
deletes the key). The live state plus a prediction snapshot and a policy
yields a target map: (example, token position) -> 0.0 or 1.0, the values
the regularized attribution is pulled toward.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .data import Dataset
from .errors import ConsistencyError, IngestionError, ValidationError
from .model import Prediction

SCOPES = ("instance", "task")
OPS = ("add", "remove", "reset")
POLICY_FILTERS = ("correct_only", "incorrect_only", "all")

FeedbackKey = tuple[str, str, "str | None"]
TargetKey = tuple[str, int]


@dataclass(frozen=True)
class FeedbackOp:
    scope: str
    op: str
    word: str
    example_id: str | None = None
    timestamp: int = 0

    def __post_init__(self):
        if self.scope not in SCOPES:
            raise ValidationError(f"unknown scope {self.scope!r}")
        if self.op not in OPS:
            raise ValidationError(f"unknown op {self.op!r}")
        if not self.word:
            raise ValidationError("feedback op needs a word")
        if self.scope == "instance" and self.example_id is None:
            raise ValidationError("instance feedback needs an example_id")
        if self.scope == "task" and self.example_id is not None:
            raise ValidationError("task feedback must not carry an example_id")

    @property
    def key(self) -> FeedbackKey:
        return (self.scope, self.word.lower(), self.example_id)

    def to_json(self) -> dict:
        obj = {"scope": self.scope, "op": self.op, "word": self.word, "timestamp": self.timestamp}
        if self.example_id is not None:
            obj["example_id"] = self.example_id
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "FeedbackOp":
        return cls(
            scope=obj["scope"],
            op=obj["op"],
            word=obj["word"],
            example_id=obj.get("example_id"),
            timestamp=int(obj["timestamp"]),
        )


@dataclass(frozen=True)
class RegularizationPolicy:
    filter: str = "correct_only"

    def __post_init__(self):
        if self.filter not in POLICY_FILTERS:
            raise ValidationError(f"unknown policy filter {self.filter!r}")


FeedbackState = dict[FeedbackKey, FeedbackOp]


def apply_feedback(log: Sequence[FeedbackOp]) -> FeedbackState:
    """Fold a timestamp-ordered log into the live state."""
    last = None
    state: FeedbackState = {}
    for op in log:
        if last is not None and op.timestamp < last:
            raise ValidationError("feedback log is not ordered by timestamp")
        last = op.timestamp
        if op.op == "reset":
            state.pop(op.key, None)
        else:
            state[op.key] = op
    return state


@dataclass
class TargetMap:
    entries: dict[TargetKey, float] = field(default_factory=dict)
    provenance: dict[TargetKey, FeedbackOp] = field(default_factory=dict)

    def __post_init__(self):
        for key, value in self.entries.items():
            if value not in (0.0, 1.0):
                raise ValidationError(f"target at {key} must be 0.0 or 1.0, got {value}")
            if key not in self.provenance:
                raise ValidationError(f"target at {key} has no originating op")

    def __len__(self) -> int:
        return len(self.entries)

    def set(self, key: TargetKey, value: float, op: FeedbackOp) -> None:
        if value not in (0.0, 1.0):
            raise ValidationError(f"target at {key} must be 0.0 or 1.0, got {value}")
        self.entries[key] = value
        self.provenance[key] = op

    def by_example(self) -> dict[str, dict[int, float]]:
        out: dict[str, dict[int, float]] = {}
        for (example_id, pos), value in self.entries.items():
            out.setdefault(example_id, {})[pos] = value
        return out


def _predictions_by_id(predictions: Iterable[Prediction]) -> dict[str, Prediction]:
    return {p.example_id: p for p in predictions}


def build_targets_instance(
    state: FeedbackState, predictions: Iterable[Prediction], data: Dataset
) -> TargetMap:
    """Targets from instance-scope feedback.

    Instance feedback is only ever collected on correctly-predicted
    examples, so an op whose example is currently mispredicted contributes
    nothing rather than teaching the wrong label.
    """
    preds = _predictions_by_id(predictions)
    out = TargetMap()
    for op in sorted(state.values(), key=lambda o: o.timestamp):
        if op.scope != "instance":
            continue
        pred = preds.get(op.example_id)
        if pred is None:
            raise ConsistencyError(f"no prediction for example {op.example_id!r}")
        if not pred.correct:
            continue
        if op.example_id not in data.by_id:
            raise ConsistencyError(f"feedback references unknown example {op.example_id!r}")
        example = data.example(op.example_id)
        positions = example.positions_of(op.word)
        if not positions:
            raise ConsistencyError(
                f"example {op.example_id!r} does not contain the word {op.word!r}"
            )
        value = 1.0 if op.op == "add" else 0.0
        for pos in positions:
            out.set((example.id, pos), value, op)
    return out


def build_targets_task(
    state: FeedbackState,
    predictions: Iterable[Prediction],
    data: Dataset,
    policy: RegularizationPolicy,
) -> TargetMap:
    """Targets from task-scope feedback under the policy filter.

    Remove ops hit every example the filter selects. Add ops additionally
    require a correct prediction, so under incorrect_only they select
    nothing.
    """
    preds = _predictions_by_id(predictions)
    out = TargetMap()
    for op in sorted(state.values(), key=lambda o: o.timestamp):
        if op.scope != "task":
            continue
        value = 1.0 if op.op == "add" else 0.0
        for example in data:
            pred = preds.get(example.id)
            if pred is None:
                raise ConsistencyError(f"no prediction for example {example.id!r}")
            if policy.filter == "correct_only":
                selected = pred.correct
            elif policy.filter == "incorrect_only":
                selected = not pred.correct
            else:
                selected = True
            if op.op == "add":
                selected = selected and pred.correct
            if not selected:
                continue
            for pos in example.positions_of(op.word):
                out.set((example.id, pos), value, op)
    return out


def merge_target_maps(maps: Sequence[TargetMap]) -> TargetMap:
    """Union of maps; on a key conflict the later-timestamped op wins."""
    out = TargetMap()
    for tm in maps:
        for key, value in tm.entries.items():
            op = tm.provenance[key]
            held = out.provenance.get(key)
            if held is None or op.timestamp > held.timestamp:
                out.set(key, value, op)
    return out


def build_targets(
    state: FeedbackState,
    predictions: Sequence[Prediction],
    data: Dataset,
    policy: RegularizationPolicy,
) -> TargetMap:
    return merge_target_maps(
        [
            build_targets_instance(state, predictions, data),
            build_targets_task(state, predictions, data, policy),
        ]
    )


def save_feedback_log(log: Iterable[FeedbackOp], path) -> None:
    with Path(path).open("w") as fh:
        for op in log:
            fh.write(json.dumps(op.to_json()) + "\n")


def append_feedback_op(op: FeedbackOp, path) -> None:
    with Path(path).open("a") as fh:
        fh.write(json.dumps(op.to_json()) + "\n")


def load_feedback_log(path) -> list[FeedbackOp]:
    path = Path(path)
    if not path.exists():
        return []
    log = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                log.append(FeedbackOp.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise IngestionError(f"{path} line {lineno}: bad feedback op ({e})")
    return log


def load_lexicon(path) -> list[str]:
    words = []
    for line in Path(path).read_text().splitlines():
        word = line.strip().lower()
        if word:
            words.append(word)
    return words
