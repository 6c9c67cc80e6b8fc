#!/usr/bin/env python3
"""Stand up the HTTP generation service and drive it like a client would.

Trains two tiny models (a summarizer and a headline writer), lays out a
service directory (checkpoints, vocabulary, config), starts the server
in-process, then talks plain HTTP: health probe, two-task generation, and the
post lifecycle (create, list, edit, delete).
"""

import argparse
import json
import os
import tempfile
import threading
import time
import urllib.request

import uvicorn

from leafseq.data import Vocabulary
from leafseq.engine import TrainPlan, save_checkpoint, train
from leafseq.models import ModelConfig, build_pointer_generator
from leafseq.service import app_from_config
from leafseq.synthetic import make_two_task_documents, pairs_from_documents, vocab_from_pairs


def call(method, url, payload=None):
    body = None if payload is None else json.dumps(payload).encode("utf-8")
    request = urllib.request.Request(
        url, data=body, method=method, headers={"Content-Type": "application/json"}
    )
    with urllib.request.urlopen(request) as response:
        raw = response.read()
        return response.status, json.loads(raw) if raw else None


def build_service_dir(workdir, seed, steps):
    documents = make_two_task_documents(24, seed=0)
    tasks = {"summary": "summary", "headline": "title"}
    vocab = vocab_from_pairs(
        pairs_from_documents(documents, "summary") + pairs_from_documents(documents, "title")
    )
    vocab.save(os.path.join(workdir, "vocab.txt"))
    for task, field in tasks.items():
        pairs = pairs_from_documents(documents, field)
        model = build_pointer_generator(
            ModelConfig(d_emb=32, hidden=48, vocab_size=len(vocab), seed=seed, coverage=True)
        )
        plan = TrainPlan(epochs=1000, batch_size=4, max_steps=steps, seed=seed)
        train(model, pairs, vocab, plan)
        save_checkpoint(os.path.join(workdir, f"{task}.lnats"), model)
    config = {
        "tasks": {
            task: {"checkpoint": f"{task}.lnats", "vocab": "vocab.txt", "beam": 4, "max_len": 8}
            for task in tasks
        },
        "data_dir": "posts-data",
    }
    config_path = os.path.join(workdir, "service.json")
    with open(config_path, "w", encoding="utf-8") as handle:
        json.dump(config, handle, indent=2)
    return config_path


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--port", type=int, default=8765)
    parser.add_argument("--steps", type=int, default=400, help="training steps per model")
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()

    workdir = tempfile.mkdtemp(prefix="leafseq-service-")
    print(f"== preparing service directory {workdir} ==")
    config_path = build_service_dir(workdir, args.seed, args.steps)
    print("trained and saved 2 task models\n")

    app = app_from_config(config_path)
    server = uvicorn.Server(
        uvicorn.Config(app, host="127.0.0.1", port=args.port, log_level="warning")
    )
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    while not server.started:
        time.sleep(0.05)
    base = f"http://127.0.0.1:{args.port}"
    print(f"== serving on {base} ==")
    print("health:", call("GET", f"{base}/v1/health")[1])

    print("\n== generation ==")
    status, body = call(
        "POST",
        f"{base}/v1/generate",
        {"text": "The mayor opened a museum in Dover on Friday.", "tasks": ["summary", "headline"]},
    )
    print(f"POST /v1/generate -> {status}")
    print("tokens:", body["src_tokens"])
    for result in body["results"]:
        print(f"  {result['task']:<9} {result['text']!r} (score {result['score']:.3f})")
        print(f"            p_gen per token: {[round(g, 3) for g in result['p_gen']]}")

    print("\n== post lifecycle ==")
    summary = body["results"][0]["text"]
    status, post = call(
        "POST",
        f"{base}/v1/posts",
        {"title": "museum opening", "summary": summary, "text": "The mayor opened a museum."},
    )
    print(f"POST /v1/posts -> {status} (id {post['id']})")
    status, posts = call("GET", f"{base}/v1/posts")
    print(f"GET /v1/posts -> {status}, {len(posts)} post(s), newest first")
    status, updated = call(
        "PUT", f"{base}/v1/posts/{post['id']}", {"title": "museum opening day"}
    )
    print(f"PUT /v1/posts/{{id}} -> {status} (title now {updated['title']!r})")
    status, _ = call("DELETE", f"{base}/v1/posts/{post['id']}")
    print(f"DELETE /v1/posts/{{id}} -> {status}")

    server.should_exit = True
    thread.join(timeout=5)
    print("\nserver stopped")


if __name__ == "__main__":
    main()
