"""HTTP service tying the pieces into an interactive debugging loop:
sessions over a dataset and model snapshot, paged instance explanations,
the ranked task view, feedback capture, asynchronous retraining, and
archive export.

Session state is flat files under one directory per session, so a
restarted server reconstructs every session from disk and replaying the
persisted feedback log reproduces the live marks exactly.
"""

from __future__ import annotations

import json
import os
import shutil
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from fastapi import Body, FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware

from .attribution import NormalizedAttribution, build_task_explanation, normalized_batch
from .data import (
    Dataset,
    Example,
    Vocabulary,
    build_vocabulary,
    encode_dataset,
    load_dataset,
    save_dataset,
    save_manifest,
)
from .errors import ErloopError, ValidationError
from .ertrain import DebugReport, ERConfig, debug_retrain, export_model, load_model
from .feedback import (
    FeedbackOp,
    RegularizationPolicy,
    append_feedback_op,
    apply_feedback,
    load_feedback_log,
)
from .model import Prediction, TextClassifier, predict_dataset
from .train import TrainConfig, train_baseline

PAGE_SIZE = 20
DATA_DIR_ENV = "ERLOOP_DATA_DIR"

SESSION_FILE = "session.json"
DATASET_FILE = "dataset.jsonl"
MANIFEST_FILE = "manifest.json"
FEEDBACK_FILE = "feedback.jsonl"
ID_EVAL_FILE = "id_eval.jsonl"
OOD_EVAL_FILE = "ood_eval.jsonl"


def _archive_name(round_number: int) -> str:
    return f"model_round_{round_number:03d}.zip"


@dataclass
class Snapshot:
    """One coherent read view: predictions and normalized attributions of
    the correctly-predicted instances for a specific round."""

    round: int
    predictions: dict[str, Prediction]
    correct: list[Example]
    correct_ids: frozenset[str]
    normalized: dict[str, NormalizedAttribution]


@dataclass
class Session:
    id: str
    root: Path
    dataset: Dataset
    vocab: Vocabulary
    model: TextClassifier
    round: int = 0
    status: str = "idle"
    feedback: list[FeedbackOp] = field(default_factory=list)
    id_eval: Dataset | None = None
    ood_eval: Dataset | None = None
    report: DebugReport | None = None
    error: str | None = None
    lock: threading.RLock = field(default_factory=threading.RLock, repr=False)
    _snapshot: Snapshot | None = field(default=None, repr=False)

    def live_state(self) -> dict:
        return apply_feedback(self.feedback)

    def snapshot(self) -> Snapshot:
        """Predictions and attributions for the current round, computed
        once per round and reused by every read endpoint."""
        if self._snapshot is not None and self._snapshot.round == self.round:
            return self._snapshot
        by_id = {p.example_id: p for p in predict_dataset(self.model, self.dataset)}
        correct = [ex for ex in self.dataset if by_id[ex.id].correct]
        normalized: dict[str, NormalizedAttribution] = {}
        for start in range(0, len(correct), 128):
            chunk = correct[start : start + 128]
            classes = [by_id[ex.id].predicted_class for ex in chunk]
            for ex, na in zip(chunk, normalized_batch(self.model, chunk, classes)):
                normalized[ex.id] = na
        self._snapshot = Snapshot(
            round=self.round, predictions=by_id, correct=correct,
            correct_ids=frozenset(ex.id for ex in correct), normalized=normalized,
        )
        return self._snapshot

    def scores_for(self, example_id: str) -> NormalizedAttribution:
        """Normalized scores for any example, correct or not, cached on the
        current snapshot."""
        snap = self.snapshot()
        if example_id not in snap.normalized:
            ex = self.dataset.example(example_id)
            class_id = snap.predictions[example_id].predicted_class
            snap.normalized[example_id] = normalized_batch(
                self.model, [ex], [class_id]
            )[0]
        return snap.normalized[example_id]

    def archive_path(self) -> Path:
        return self.root / _archive_name(self.round)

    def write_meta(self) -> None:
        meta = {
            "id": self.id,
            "round": self.round,
            "num_classes": self.dataset.num_classes,
            "has_id_eval": self.id_eval is not None,
            "has_ood_eval": self.ood_eval is not None,
        }
        tmp = self.root / (SESSION_FILE + ".tmp")
        tmp.write_text(json.dumps(meta, sort_keys=True))
        os.replace(tmp, self.root / SESSION_FILE)


class SessionStore:
    """All sessions under one data directory, one subdirectory each."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.sessions: dict[str, Session] = {}
        self.lock = threading.Lock()
        self._recover()

    def _recover(self) -> None:
        for meta_path in sorted(self.data_dir.glob(f"*/{SESSION_FILE}")):
            root = meta_path.parent
            meta = json.loads(meta_path.read_text())
            model, vocab = load_model(root / _archive_name(meta["round"]))
            dataset = load_dataset(
                root / DATASET_FILE, root / MANIFEST_FILE, vocab=vocab
            )
            session = Session(
                id=meta["id"], root=root, dataset=dataset, vocab=vocab,
                model=model, round=meta["round"],
                feedback=load_feedback_log(root / FEEDBACK_FILE),
            )
            if meta.get("has_id_eval"):
                session.id_eval = load_dataset(
                    root / ID_EVAL_FILE, root / MANIFEST_FILE, vocab=vocab,
                    split_tag="id_eval",
                )
            if meta.get("has_ood_eval"):
                session.ood_eval = load_dataset(
                    root / OOD_EVAL_FILE, root / MANIFEST_FILE, vocab=vocab,
                    split_tag="ood_eval",
                )
            self.sessions[session.id] = session

    def get(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"no session {session_id!r}")
        return session

    def create(
        self,
        dataset_path: str,
        manifest_path: str | None,
        model_path: str | None,
        train_config: dict | None,
        id_eval_path: str | None,
        ood_eval_path: str | None,
    ) -> Session:
        if (model_path is None) == (train_config is None):
            raise ValidationError(
                "provide exactly one of model_path and train_config"
            )
        if model_path is not None:
            model, vocab = load_model(model_path)
            dataset = load_dataset(dataset_path, manifest_path, vocab=vocab)
            if dataset.num_classes != model.num_classes:
                raise ValidationError(
                    f"dataset has {dataset.num_classes} classes, "
                    f"model archive has {model.num_classes}"
                )
        else:
            dataset = load_dataset(dataset_path, manifest_path)
            vocab = build_vocabulary(dataset)
            dataset = encode_dataset(dataset, vocab)
            cfg = dict(train_config)
            init = TextClassifier.init(
                vocab_size=len(vocab),
                num_classes=dataset.num_classes,
                embedding_dim=int(cfg.pop("embedding_dim", 32)),
                hidden_dim=int(cfg.pop("hidden_dim", 32)),
                seed=int(cfg.get("seed", 0)),
                nonlinearity=str(cfg.pop("nonlinearity", "tanh")),
            )
            model = train_baseline(init, dataset, _train_config(cfg))

        session_id = uuid.uuid4().hex[:12]
        root = self.data_dir / session_id
        root.mkdir()
        session = Session(
            id=session_id, root=root, dataset=dataset, vocab=vocab, model=model
        )
        save_dataset(dataset, root / DATASET_FILE)
        save_manifest(dataset.num_classes, [], root / MANIFEST_FILE)
        if id_eval_path is not None:
            session.id_eval = load_dataset(
                id_eval_path, manifest_path, vocab=vocab, split_tag="id_eval"
            )
            save_dataset(session.id_eval, root / ID_EVAL_FILE)
        if ood_eval_path is not None:
            session.ood_eval = load_dataset(
                ood_eval_path, manifest_path, vocab=vocab, split_tag="ood_eval"
            )
            save_dataset(session.ood_eval, root / OOD_EVAL_FILE)
        (root / FEEDBACK_FILE).touch()
        if model_path is not None:
            # keep the caller's archive byte-for-byte as the round-0 export
            shutil.copyfile(model_path, session.archive_path())
        else:
            export_model(model, vocab, session.archive_path())
        session.write_meta()
        with self.lock:
            self.sessions[session_id] = session
        return session


def _train_config(cfg: dict) -> TrainConfig:
    known = {"epochs", "learning_rate", "batch_size", "seed"}
    unknown = set(cfg) - known
    if unknown:
        raise ValidationError(f"unknown train_config fields: {sorted(unknown)}")
    return TrainConfig(**{k: cfg[k] for k in known & set(cfg)})


def _er_config(cfg: dict) -> ERConfig:
    known = {
        "loss", "strength", "epochs", "learning_rate", "batch_size", "seed",
        "attribution_method", "normalization", "target_rebuild_every",
    }
    unknown = set(cfg) - known
    if unknown:
        raise ValidationError(f"unknown config fields: {sorted(unknown)}")
    config = ERConfig(**{k: cfg[k] for k in known & set(cfg)})
    config.validate()
    return config


def _require_idle(session: Session) -> None:
    if session.status != "idle":
        raise HTTPException(status_code=409, detail="session is retraining")


def _instance_marks(state: dict, example_id: str) -> dict[str, str]:
    return {
        word: op.op
        for (scope, word, ex_id), op in state.items()
        if scope == "instance" and ex_id == example_id
    }


def _task_marks(state: dict) -> dict[str, str]:
    return {
        word: op.op for (scope, word, _), op in state.items() if scope == "task"
    }


def create_app(data_dir: str | Path | None = None) -> FastAPI:
    """The service over one data directory; existing sessions on disk are
    recovered before the first request."""
    if data_dir is None:
        data_dir = os.environ.get(DATA_DIR_ENV, "erloop_data")
    store = SessionStore(data_dir)
    app = FastAPI(title="erloop")
    # The browser frontend is served from its own origin.
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.store = store

    @app.post("/sessions", status_code=201)
    def create_session(payload: dict = Body(...)):
        known = {
            "dataset_path", "manifest_path", "model_path", "train_config",
            "id_eval_path", "ood_eval_path",
        }
        unknown = set(payload) - known
        if unknown:
            raise HTTPException(
                status_code=422, detail=f"unknown fields: {sorted(unknown)}"
            )
        if "dataset_path" not in payload:
            raise HTTPException(status_code=422, detail="dataset_path is required")
        try:
            session = store.create(
                dataset_path=payload["dataset_path"],
                manifest_path=payload.get("manifest_path"),
                model_path=payload.get("model_path"),
                train_config=payload.get("train_config"),
                id_eval_path=payload.get("id_eval_path"),
                ood_eval_path=payload.get("ood_eval_path"),
            )
        except ErloopError as e:
            raise HTTPException(status_code=422, detail=str(e))
        return {"id": session.id, "round": session.round}

    @app.get("/sessions/{session_id}/instances")
    def get_instances(session_id: str, page: int = 1):
        session = store.get(session_id)
        with session.lock:
            _require_idle(session)
            if page < 1:
                raise HTTPException(status_code=422, detail="page starts at 1")
            snap = session.snapshot()
            state = session.live_state()
            start = (page - 1) * PAGE_SIZE
            items = []
            for ex in snap.correct[start : start + PAGE_SIZE]:
                items.append(
                    {
                        "example_id": ex.id,
                        "tokens": list(ex.raw_tokens),
                        "gold_label": ex.label,
                        "predicted_label": snap.predictions[ex.id].predicted_class,
                        "scores": [float(s) for s in snap.normalized[ex.id].scores],
                        "marks": _instance_marks(state, ex.id),
                    }
                )
            return {
                "round": session.round,
                "page": page,
                "page_size": PAGE_SIZE,
                "total": len(snap.correct),
                "items": items,
            }

    @app.get("/sessions/{session_id}/task-explanation")
    def get_task_explanation(session_id: str, top_k: int = 50):
        session = store.get(session_id)
        with session.lock:
            _require_idle(session)
            if top_k < 0:
                raise HTTPException(status_code=422, detail="top_k must be >= 0")
            snap = session.snapshot()
            explanation = build_task_explanation(
                session.model, session.dataset, "input_x_gradient",
                top_k=top_k, predictions=list(snap.predictions.values()),
            )
            return {
                "round": session.round,
                "entries": [
                    {
                        "word": e.word,
                        "mean_importance": e.mean_importance,
                        "support": list(e.support),
                    }
                    for e in explanation.entries
                ],
                "marks": _task_marks(session.live_state()),
            }

    @app.get("/sessions/{session_id}/examples/{example_id}")
    def get_example(session_id: str, example_id: str):
        session = store.get(session_id)
        with session.lock:
            _require_idle(session)
            snap = session.snapshot()
            if example_id not in session.dataset.by_id:
                raise HTTPException(
                    status_code=404, detail=f"no example {example_id!r}"
                )
            ex = session.dataset.example(example_id)
            return {
                "round": session.round,
                "example_id": example_id,
                "tokens": list(ex.raw_tokens),
                "gold_label": ex.label,
                "predicted_label": snap.predictions[example_id].predicted_class,
                "correct": example_id in snap.correct_ids,
                "scores": [float(s) for s in session.scores_for(example_id).scores],
                "marks": _instance_marks(session.live_state(), example_id),
            }

    @app.post("/sessions/{session_id}/feedback")
    def post_feedback(session_id: str, payload: dict = Body(...)):
        session = store.get(session_id)
        with session.lock:
            _require_idle(session)
            known = {"scope", "op", "word", "example_id"}
            unknown = set(payload) - known
            if unknown:
                raise HTTPException(
                    status_code=422, detail=f"unknown fields: {sorted(unknown)}"
                )
            timestamp = (
                session.feedback[-1].timestamp + 1 if session.feedback else 0
            )
            try:
                op = FeedbackOp(
                    scope=payload.get("scope", ""),
                    op=payload.get("op", ""),
                    word=payload.get("word", ""),
                    example_id=payload.get("example_id"),
                    timestamp=timestamp,
                )
            except ErloopError as e:
                raise HTTPException(status_code=422, detail=str(e))

            snap = session.snapshot()
            if op.scope == "instance":
                if op.example_id not in session.dataset.by_id:
                    raise HTTPException(
                        status_code=422,
                        detail=f"unknown example {op.example_id!r}",
                    )
                if op.example_id not in snap.correct_ids:
                    raise HTTPException(
                        status_code=422,
                        detail="instance feedback applies only to "
                        "correctly-predicted instances",
                    )
                example = session.dataset.example(op.example_id)
                if not example.positions_of(op.word):
                    raise HTTPException(
                        status_code=422,
                        detail=f"word {op.word!r} does not occur in {op.example_id!r}",
                    )
            else:
                if op.word.lower() not in session.vocab:
                    raise HTTPException(
                        status_code=422,
                        detail=f"word {op.word!r} is not in the vocabulary",
                    )
            append_feedback_op(op, session.root / FEEDBACK_FILE)
            session.feedback.append(op)
            live = session.live_state().get(op.key)
            return {
                "recorded": op.to_json(),
                "live_op": None if live is None else live.op,
            }

    @app.post("/sessions/{session_id}/retrain", status_code=202)
    def start_retrain(session_id: str, payload: dict = Body(default={})):
        session = store.get(session_id)
        with session.lock:
            if session.status != "idle":
                raise HTTPException(
                    status_code=409, detail="a retraining job is already running"
                )
            if not session.feedback:
                raise HTTPException(
                    status_code=412, detail="feedback log is empty"
                )
            known = {"policy", "config"}
            unknown = set(payload) - known
            if unknown:
                raise HTTPException(
                    status_code=422, detail=f"unknown fields: {sorted(unknown)}"
                )
            try:
                policy = RegularizationPolicy(payload.get("policy", "correct_only"))
                config = _er_config(payload.get("config", {}))
            except ErloopError as e:
                raise HTTPException(status_code=422, detail=str(e))
            session.status = "retraining"
            session.error = None
            job_id = f"{session.id}-round-{session.round + 1}"

        def run():
            try:
                retrained, report = debug_retrain(
                    session.model, session.dataset, session.feedback, policy,
                    config, session.id_eval, session.ood_eval,
                )
                target = session.root / _archive_name(session.round + 1)
                tmp = target.with_suffix(".tmp")
                export_model(retrained, session.vocab, tmp)
                os.replace(tmp, target)
                with session.lock:
                    session.model = retrained
                    session.round += 1
                    session.report = report
                    session.write_meta()
                    session.status = "idle"
            except ErloopError as e:
                with session.lock:
                    session.error = str(e)
                    session.status = "idle"

        threading.Thread(target=run, daemon=True).start()
        return {"job_id": job_id, "status": "retraining"}

    @app.get("/sessions/{session_id}/status")
    def get_status(session_id: str):
        session = store.get(session_id)
        with session.lock:
            return {
                "status": session.status,
                "round": session.round,
                "report": None if session.report is None else session.report.to_json(),
                "error": session.error,
            }

    @app.get("/sessions/{session_id}/export")
    def export(session_id: str):
        session = store.get(session_id)
        with session.lock:
            _require_idle(session)
            blob = session.archive_path().read_bytes()
            return Response(
                content=blob,
                media_type="application/zip",
                headers={
                    "Content-Disposition": f"attachment; filename={_archive_name(session.round)}"
                },
            )

    return app


def wait_until_idle(client, session_id: str, timeout: float = 120.0) -> dict:
    """Poll status until the session leaves the retraining state; mainly
    for tests and scripted drivers."""
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        body = client.get(f"/sessions/{session_id}/status").json()
        if body["status"] == "idle":
            return body
        time.sleep(0.02)
    raise TimeoutError(f"session {session_id} still retraining after {timeout}s")
