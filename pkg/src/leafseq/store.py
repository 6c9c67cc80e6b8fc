"""File-backed post store: an append-only JSON-lines journal with compaction.

Every mutation appends one journal record; opening the store replays the
journal to rebuild the live set. When the journal accumulates enough dead
records it is compacted — rewritten atomically with only the live posts.
A torn final line (interrupted write) is tolerated on replay; corruption
anywhere else is an error.
"""

import json
import os
import tempfile
import threading
import uuid
from datetime import datetime, timezone

from .tensor import ContractError

_UPDATABLE_FIELDS = ("title", "summary", "text")


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


class PostStore:
    """Thread-safe CRUD over posts persisted in one JSON-lines journal.

    Posts are dicts with id, title, summary, text, created_at, updated_at.
    ``list_posts`` returns newest-first by creation order. All returned
    dicts are copies; the store's state changes only through its methods.
    """

    def __init__(self, path, compact_threshold=256):
        self.path = os.fspath(path)
        directory = os.path.dirname(self.path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        self.compact_threshold = compact_threshold
        self._lock = threading.Lock()
        self._posts = {}
        self._seq = {}
        self._next_seq = 0
        self._records = 0
        self._replay()

    def _replay(self):
        if not os.path.exists(self.path):
            return
        with open(self.path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        for number, line in enumerate(lines):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                if number == len(lines) - 1:
                    break  # torn trailing write from an interrupted append
                raise ContractError(f"{self.path}:{number + 1}: corrupt journal record")
            self._records += 1
            op = record.get("op")
            if op == "put":
                post = record["post"]
                seq = int(record["seq"])
                self._posts[post["id"]] = post
                self._seq[post["id"]] = seq
                self._next_seq = max(self._next_seq, seq + 1)
            elif op == "delete":
                self._posts.pop(record["id"], None)
                self._seq.pop(record["id"], None)
            else:
                raise ContractError(f"{self.path}:{number + 1}: unknown journal op {op!r}")

    def _append(self, record):
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")
        self._records += 1
        if self._records >= self.compact_threshold and self._records >= 2 * len(self._posts):
            self._compact()

    def _compact(self):
        directory = os.path.dirname(self.path) or "."
        fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                for post_id in sorted(self._posts, key=lambda i: self._seq[i]):
                    record = {"op": "put", "seq": self._seq[post_id], "post": self._posts[post_id]}
                    fh.write(json.dumps(record, separators=(",", ":")) + "\n")
            os.replace(tmp_path, self.path)
        except BaseException:
            if os.path.exists(tmp_path):
                os.remove(tmp_path)
            raise
        self._records = len(self._posts)

    def compact(self):
        with self._lock:
            self._compact()

    @property
    def journal_records(self):
        with self._lock:
            return self._records

    def create(self, title="", summary="", text=""):
        if not isinstance(text, str) or not text.strip():
            raise ContractError("post text must be a non-empty string")
        now = _now()
        post = {
            "id": uuid.uuid4().hex,
            "title": title,
            "summary": summary,
            "text": text,
            "created_at": now,
            "updated_at": now,
        }
        with self._lock:
            seq = self._next_seq
            self._next_seq += 1
            self._posts[post["id"]] = post
            self._seq[post["id"]] = seq
            self._append({"op": "put", "seq": seq, "post": post})
        return dict(post)

    def get(self, post_id):
        with self._lock:
            post = self._posts.get(post_id)
            return dict(post) if post else None

    def list_posts(self):
        with self._lock:
            ordered = sorted(self._posts.values(), key=lambda p: self._seq[p["id"]], reverse=True)
            return [dict(post) for post in ordered]

    def update(self, post_id, **fields):
        unknown = set(fields) - set(_UPDATABLE_FIELDS)
        if unknown:
            raise ContractError(f"unknown post fields: {sorted(unknown)}")
        if "text" in fields and (not isinstance(fields["text"], str) or not fields["text"].strip()):
            raise ContractError("post text must be a non-empty string")
        with self._lock:
            post = self._posts.get(post_id)
            if post is None:
                return None
            post = dict(post)
            post.update(fields)
            post["updated_at"] = _now()
            self._posts[post_id] = post
            self._append({"op": "put", "seq": self._seq[post_id], "post": post})
            return dict(post)

    def delete(self, post_id):
        with self._lock:
            if post_id not in self._posts:
                return False
            del self._posts[post_id]
            del self._seq[post_id]
            self._append({"op": "delete", "id": post_id})
            return True
