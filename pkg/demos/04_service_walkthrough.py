"""Drive the HTTP service end to end without leaving one process: create
a session, read explanations, post feedback, retrain, and export the
debugged model.

For a real server, run `erloop serve --port 8000` and point a browser
at the web frontend instead.

Run with: python3 demos/04_service_walkthrough.py
"""

import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from erloop import (
    SyntheticSpec,
    TextClassifier,
    TrainConfig,
    build_vocabulary,
    create_app,
    export_model,
    generate_synthetic,
    save_dataset,
    save_manifest,
    train_baseline,
)
from erloop.service import wait_until_idle

workdir = Path(tempfile.mkdtemp(prefix="erloop-demo-"))
spec = SyntheticSpec(vocab_size=20, train_size=200, id_eval_size=60,
                     ood_eval_size=60, signal_words_per_class=2, seed=3)
train, id_eval, ood_eval = generate_synthetic(spec)
vocab = build_vocabulary(train)
model = TextClassifier.init(vocab_size=len(vocab), num_classes=2,
                            embedding_dim=16, hidden_dim=16, seed=1)
baseline = train_baseline(model, train, TrainConfig(epochs=20, seed=0))
save_dataset(train, workdir / "train.jsonl")
save_dataset(ood_eval, workdir / "ood.jsonl")
save_manifest(2, ["class0", "class1"], workdir / "manifest.json")
export_model(baseline, vocab, workdir / "model.zip")

client = TestClient(create_app(workdir / "sessions"))

created = client.post("/sessions", json={
    "dataset_path": str(workdir / "train.jsonl"),
    "manifest_path": str(workdir / "manifest.json"),
    "model_path": str(workdir / "model.zip"),
    "ood_eval_path": str(workdir / "ood.jsonl"),
})
session = created.json()["id"]
print(f"session {session} created at round {created.json()['round']}")

page = client.get(f"/sessions/{session}/instances").json()
print(f"{page['total']} correctly-predicted instances, "
      f"{len(page['items'])} on page 1")
first = page["items"][0]
print(f"first instance {first['example_id']}: tokens {first['tokens'][:4]}..., "
      f"peak score {max(first['scores']):.2f}")

task = client.get(f"/sessions/{session}/task-explanation",
                  params={"top_k": 5}).json()
print("top task words:", [e["word"] for e in task["entries"]])

ack = client.post(f"/sessions/{session}/feedback", json={
    "scope": "task", "op": "remove", "word": spec.decoy_word,
})
print(f"feedback recorded, live op = {ack.json()['live_op']}")

client.post(f"/sessions/{session}/retrain",
            json={"policy": "all", "config": {"epochs": 6, "seed": 0}})
status = wait_until_idle(client, session)
report = status["report"]
print(f"round {status['round']} committed: "
      f"ood {report['pre_ood_accuracy']:.3f} -> {report['post_ood_accuracy']:.3f}, "
      f"decoy attribution {report['pre_target_attribution']:.3f} -> "
      f"{report['post_target_attribution']:.3f}")

blob = client.get(f"/sessions/{session}/export").content
out = workdir / "debugged.zip"
out.write_bytes(blob)
print(f"debugged model archive: {out} ({len(blob)} bytes)")
