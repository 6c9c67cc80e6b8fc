"""HTTP service: text generation with attention traces, plus post storage.

The registry maps task names to immutable loaded models; generation
requests decode on a worker thread pool so concurrent requests interleave
while each response is identical to a serial execution (decoding is
deterministic and read-only). Posts persist in a journal-backed store.
"""

import json
import logging
import os
import uuid
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response
from starlette.concurrency import run_in_threadpool

from . import engine
from .beam import beam_search, trace_for_ui
from .data import Vocabulary, encode_with_oov, tokenize
from .store import PostStore
from .tensor import ContractError

logger = logging.getLogger(__name__)

DEFAULT_BEAM = 4
DEFAULT_MAX_LEN = 30
BEAM_CAP = 16
MAX_LEN_CAP = 200
SOURCE_TOKEN_CAP = 400
POST_FIELDS = ("title", "summary", "text")


def sig6(value):
    """Round to 6 significant digits, the wire precision for attention."""
    return float(f"{float(value):.6g}")


def prepare_source(text):
    """Tokenize request text, capped to the decoder's source length."""
    return tokenize(text)[:SOURCE_TOKEN_CAP]


@dataclass
class TaskEntry:
    view: object
    vocab: Vocabulary
    beam: int
    max_len: int


class ModelRegistry:
    """Task name -> loaded model view; immutable once frozen at startup."""

    def __init__(self):
        self._entries = {}
        self._frozen = False

    def register(self, task, model, vocab, branch=None, beam=DEFAULT_BEAM,
                 max_len=DEFAULT_MAX_LEN):
        if self._frozen:
            raise ContractError("registry is frozen; models are fixed after startup")
        if task in self._entries:
            raise ContractError(f"task {task!r} registered twice")
        if hasattr(model, "shared_parameter_names") and branch is None:
            branch = task
        view = model.view(branch)
        self._entries[task] = TaskEntry(view, vocab, int(beam), int(max_len))

    def freeze(self):
        self._frozen = True

    def tasks(self):
        return sorted(self._entries)

    def __len__(self):
        return len(self._entries)

    def get(self, task):
        return self._entries.get(task)

    def generate(self, task, src_tokens, beam=None, max_len=None):
        """Decode one task over prepared source tokens; JSON-ready record."""
        entry = self._entries.get(task)
        if entry is None:
            raise ContractError(f"unknown task: {task}")
        ids, ext_ids, oov = encode_with_oov(src_tokens, entry.vocab)
        hypotheses = beam_search(
            entry.view,
            ids,
            np.ones(len(ids)),
            ext_ids,
            len(oov),
            beam=beam or entry.beam,
            max_len=max_len or entry.max_len,
        )
        trace = trace_for_ui(hypotheses[0], src_tokens, entry.vocab, oov)
        trace["attention"] = [[sig6(x) for x in row] for row in trace["attention"]]
        return {"task": task, **trace}

    def smoke_decode(self):
        """Decode a one-token probe on every task; raises on any failure."""
        for task in self.tasks():
            entry = self._entries[task]
            probe = entry.vocab.token_for(4) if len(entry.vocab) > 4 else "probe"
            self.generate(task, [probe], beam=1, max_len=2)


def build_registry(config, base_dir="."):
    """Load every configured task model, smoke-decode, and freeze.

    Config shape: {"tasks": {name: {"checkpoint", "vocab", "branch"?,
    "beam"?, "max_len"?}}}. Relative paths resolve against ``base_dir``.
    """
    registry = ModelRegistry()
    tasks = config.get("tasks", {})
    for task in sorted(tasks):
        entry = tasks[task]
        for key in ("checkpoint", "vocab"):
            if key not in entry:
                raise ContractError(f"task {task!r} config requires {key!r}")
        ckpt_path = os.path.join(base_dir, entry["checkpoint"])
        vocab_path = os.path.join(base_dir, entry["vocab"])
        model, _ = engine.load_model(ckpt_path)
        vocab = Vocabulary.load(vocab_path)
        registry.register(
            task,
            model,
            vocab,
            branch=entry.get("branch"),
            beam=entry.get("beam", DEFAULT_BEAM),
            max_len=entry.get("max_len", DEFAULT_MAX_LEN),
        )
    registry.smoke_decode()
    registry.freeze()
    return registry


def _error(status, message):
    return JSONResponse({"error": message}, status_code=status)


class _BadRequest(Exception):
    def __init__(self, message):
        super().__init__(message)
        self.message = message


async def _json_object(request):
    try:
        payload = await request.json()
    except Exception:
        raise _BadRequest("request body must be valid JSON")
    if not isinstance(payload, dict):
        raise _BadRequest("request body must be a JSON object")
    return payload


def _positive_int(payload, key, cap):
    value = payload.get(key)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int) or not 1 <= value <= cap:
        raise _BadRequest(f"{key} must be an integer in [1, {cap}]")
    return value


def _post_fields(payload, require_text):
    unknown = set(payload) - set(POST_FIELDS)
    if unknown:
        raise _BadRequest(f"unexpected fields: {', '.join(sorted(unknown))}")
    fields = {}
    for key in POST_FIELDS:
        if key not in payload:
            continue
        if not isinstance(payload[key], str):
            raise _BadRequest(f"{key} must be a string")
        fields[key] = payload[key]
    if require_text and not fields.get("text", "").strip():
        raise _BadRequest("text must be a non-empty string")
    if "text" in fields and not fields["text"].strip():
        raise _BadRequest("text must be a non-empty string")
    return fields


def create_app(registry=None, store=None, data_dir=None):
    """Assemble the FastAPI app around a frozen registry and a post store.

    Store location precedence: LEAFSEQ_DATA_DIR, then ``data_dir``, then
    ./leafseq-data.
    """
    if registry is None:
        registry = ModelRegistry()
        registry.freeze()
    if store is None:
        directory = os.environ.get("LEAFSEQ_DATA_DIR") or data_dir or "leafseq-data"
        store = PostStore(os.path.join(directory, "posts.jsonl"))
    app = FastAPI(title="leafseq", docs_url=None, redoc_url=None)
    app.state.registry = registry
    app.state.store = store

    @app.exception_handler(_BadRequest)
    async def bad_request_handler(request, exc):
        return _error(400, exc.message)

    @app.get("/v1/health")
    async def health():
        return {"status": "ok", "tasks": registry.tasks()}

    @app.post("/v1/generate")
    async def generate(request: Request):
        payload = await _json_object(request)
        text = payload.get("text")
        if not isinstance(text, str) or not text.strip():
            raise _BadRequest("text must be a non-empty string")
        tasks = payload.get("tasks", [])
        if not isinstance(tasks, list) or not all(isinstance(t, str) for t in tasks):
            raise _BadRequest("tasks must be a list of task names")
        beam = _positive_int(payload, "beam", BEAM_CAP)
        max_len = _positive_int(payload, "max_len", MAX_LEN_CAP)
        for task in tasks:
            if registry.get(task) is None:
                raise _BadRequest(f"unknown task: {task}")
        src_tokens = prepare_source(text)
        results = []
        for task in tasks:
            try:
                result = await run_in_threadpool(
                    registry.generate, task, src_tokens, beam, max_len
                )
            except Exception:
                error_id = uuid.uuid4().hex[:8]
                logger.exception("generation failed (id=%s, task=%s)", error_id, task)
                return _error(500, f"generation failed (id={error_id})")
            results.append(result)
        return {"src_tokens": src_tokens, "results": results}

    @app.post("/v1/posts")
    async def create_post(request: Request):
        fields = _post_fields(await _json_object(request), require_text=True)
        post = store.create(
            title=fields.get("title", ""),
            summary=fields.get("summary", ""),
            text=fields["text"],
        )
        return JSONResponse(post, status_code=201)

    @app.get("/v1/posts")
    async def list_posts():
        return store.list_posts()

    @app.get("/v1/posts/{post_id}")
    async def get_post(post_id: str):
        post = store.get(post_id)
        if post is None:
            return _error(404, f"no post with id {post_id}")
        return post

    @app.put("/v1/posts/{post_id}")
    async def update_post(post_id: str, request: Request):
        fields = _post_fields(await _json_object(request), require_text=False)
        post = store.update(post_id, **fields)
        if post is None:
            return _error(404, f"no post with id {post_id}")
        return post

    @app.delete("/v1/posts/{post_id}")
    async def delete_post(post_id: str):
        if not store.delete(post_id):
            return _error(404, f"no post with id {post_id}")
        return Response(status_code=204)

    return app


def load_service_config(path):
    """Read a service config file; returns (config dict, its directory)."""
    path = os.fspath(path)
    with open(path, "r", encoding="utf-8") as fh:
        config = json.load(fh)
    if not isinstance(config, dict):
        raise ContractError(f"{path}: service config must be a JSON object")
    return config, os.path.dirname(os.path.abspath(path))


def app_from_config(path):
    """Build the full app (models loaded and smoke-decoded) from a config file."""
    config, base_dir = load_service_config(path)
    registry = build_registry(config, base_dir)
    data_dir = config.get("data_dir")
    if data_dir is not None and not os.path.isabs(data_dir):
        data_dir = os.path.join(base_dir, data_dir)
    return create_app(registry, data_dir=data_dir)
