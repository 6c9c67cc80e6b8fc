"""Corpus ingestion, tokenization, vocabulary and mini-batch preparation.

Token streams flow: raw text -> tokenize -> Vocabulary ids, with
out-of-vocabulary source tokens assigned per-example extended ids so the
copy mechanism can point at them.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .tensor import ContractError

logger = logging.getLogger(__name__)

PAD_ID = 0
UNK_ID = 1
BOS_ID = 2
EOS_ID = 3
SPECIAL_TOKENS = ("<pad>", "<unk>", "<bos>", "<eos>")

_SPLIT_PUNCT = '.,!?;:"()'
_PUNCT_TABLE = str.maketrans({ch: f" {ch} " for ch in _SPLIT_PUNCT})


def tokenize(text):
    """Lowercase, split on whitespace, punctuation as standalone tokens.

    Deterministic, and stable under re-tokenizing a space-joined result.
    """
    return text.lower().translate(_PUNCT_TABLE).split()


@dataclass
class Document:
    """One corpus record; fields are token lists, absent fields are None."""

    text: list
    summary: Optional[list] = None
    title: Optional[list] = None

    def target(self, kind):
        """The reference token list for a task kind ('summary' or 'title')."""
        value = getattr(self, kind, None)
        if value is None:
            raise ContractError(f"document has no {kind!r} field")
        return value


class Vocabulary:
    """Dense token<->id map with fixed special ids pad=0, unk=1, bos=2, eos=3."""

    def __init__(self, tokens, counts=None):
        self._id_to_token = list(SPECIAL_TOKENS) + list(tokens)
        self._token_to_id = {tok: i for i, tok in enumerate(self._id_to_token)}
        if len(self._token_to_id) != len(self._id_to_token):
            raise ContractError("vocabulary tokens must be distinct")
        self.counts = dict(counts) if counts else {}

    def __len__(self):
        return len(self._id_to_token)

    def __contains__(self, token):
        return token in self._token_to_id

    def id_for(self, token):
        """Vocabulary id, or the unk id for unknown tokens."""
        return self._token_to_id.get(token, UNK_ID)

    def token_for(self, token_id):
        if not 0 <= token_id < len(self._id_to_token):
            raise ContractError(f"token id {token_id} outside vocabulary of size {len(self)}")
        return self._id_to_token[token_id]

    def save(self, path):
        """Write 'token count' lines in rank order; specials are implicit."""
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self._id_to_token[len(SPECIAL_TOKENS):]:
                fh.write(f"{tok} {self.counts.get(tok, 0)}\n")

    @classmethod
    def load(cls, path):
        tokens, counts = [], {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                tok, _, count = line.rpartition(" ")
                tokens.append(tok)
                counts[tok] = int(count)
        return cls(tokens, counts)


def build_vocab(documents, max_size):
    """Most frequent tokens across all fields; ties broken lexicographically."""
    if max_size <= len(SPECIAL_TOKENS):
        raise ContractError(f"max_size must exceed {len(SPECIAL_TOKENS)} to fit the special tokens")
    counts = {}
    for doc in documents:
        for part in (doc.text, doc.summary, doc.title):
            if part is None:
                continue
            for tok in part:
                counts[tok] = counts.get(tok, 0) + 1
    if not counts:
        raise ContractError("cannot build a vocabulary from an empty corpus")
    ranked = sorted(counts, key=lambda tok: (-counts[tok], tok))
    kept = ranked[: max_size - len(SPECIAL_TOKENS)]
    return Vocabulary(kept, {tok: counts[tok] for tok in kept})


def encode_with_oov(tokens, vocab):
    """Source-side encoding.

    Returns (unk-mapped ids, extended ids, oov token list). Extended ids of
    in-vocab tokens equal their vocab ids; each distinct OOV token gets
    |V|+k with k in first-occurrence order.
    """
    ids, ext_ids, oov = [], [], []
    slots = {}
    for tok in tokens:
        if tok in vocab:
            i = vocab.id_for(tok)
            ids.append(i)
            ext_ids.append(i)
        else:
            ids.append(UNK_ID)
            if tok not in slots:
                slots[tok] = len(oov)
                oov.append(tok)
            ext_ids.append(len(vocab) + slots[tok])
    return ids, ext_ids, oov


def encode_target(tokens, vocab, oov_tokens):
    """Target-side encoding against one example's OOV list.

    Returns (unk-mapped ids, extended ids). A target token absent from both
    the vocabulary and the source OOV list stays unk in both streams (it
    cannot be generated or copied).
    """
    slots = {tok: i for i, tok in enumerate(oov_tokens)}
    ids, ext_ids = [], []
    for tok in tokens:
        if tok in vocab:
            i = vocab.id_for(tok)
            ids.append(i)
            ext_ids.append(i)
        else:
            ids.append(UNK_ID)
            ext_ids.append(len(vocab) + slots[tok] if tok in slots else UNK_ID)
    return ids, ext_ids


def decode_extended(ids, vocab, oov_tokens):
    """Resolve extended ids back to surface tokens (inverse of encoding)."""
    out = []
    for i in ids:
        i = int(i)
        if i < len(vocab):
            out.append(vocab.token_for(i))
        elif i < len(vocab) + len(oov_tokens):
            out.append(oov_tokens[i - len(vocab)])
        else:
            raise ContractError(
                f"extended id {i} unresolvable: vocabulary size {len(vocab)}, "
                f"{len(oov_tokens)} oov slots"
            )
    return out


@dataclass
class ExtendedBatch:
    """Padded id arrays for one mini-batch.

    src holds unk-mapped ids (valid embedding lookups); src_ext holds
    extended ids for the copy distribution. tgt_in is bos+tokens
    (unk-mapped), tgt_out is tokens+eos (extended). Masks are 1.0 at real
    positions. oovs holds each example's OOV surface forms.
    """

    src: np.ndarray
    src_ext: np.ndarray
    src_mask: np.ndarray
    tgt_in: np.ndarray
    tgt_out: np.ndarray
    tgt_mask: np.ndarray
    oovs: list
    task: Optional[str] = None

    @property
    def size(self):
        return self.src.shape[0]

    def n_oov(self, row):
        return len(self.oovs[row])


def _pad(rows, width):
    out = np.full((len(rows), width), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(rows), width))
    for r, row in enumerate(rows):
        out[r, : len(row)] = row
        mask[r, : len(row)] = 1.0
    return out, mask


def make_batches(pairs, vocab, batch_size, max_src_len=400, max_tgt_len=100, seed=None, task=None):
    """Partition (source tokens, target tokens) pairs into ExtendedBatches.

    Sequences are truncated to the caps first, then padded to the batch
    max. With a seed the pair order is shuffled reproducibly; with
    seed=None the given order is kept.
    """
    if batch_size < 1:
        raise ContractError("batch_size must be >= 1")
    pairs = list(pairs)
    if not pairs:
        raise ContractError("make_batches: empty dataset")
    order = np.arange(len(pairs))
    if seed is not None:
        order = np.random.default_rng(seed).permutation(len(pairs))

    batches = []
    for start in range(0, len(pairs), batch_size):
        chunk = [pairs[i] for i in order[start : start + batch_size]]
        src_rows, ext_rows, in_rows, out_rows, oovs = [], [], [], [], []
        for src_tokens, tgt_tokens in chunk:
            src_tokens = src_tokens[:max_src_len]
            tgt_tokens = tgt_tokens[:max_tgt_len]
            src_ids, src_ext, oov = encode_with_oov(src_tokens, vocab)
            tgt_ids, tgt_ext = encode_target(tgt_tokens, vocab, oov)
            src_rows.append(src_ids)
            ext_rows.append(src_ext)
            in_rows.append([BOS_ID] + tgt_ids)
            out_rows.append(tgt_ext + [EOS_ID])
            oovs.append(oov)
        src_w = max(len(r) for r in src_rows)
        tgt_w = max(len(r) for r in in_rows)
        src, src_mask = _pad(src_rows, src_w)
        src_ext_arr, _ = _pad(ext_rows, src_w)
        tgt_in, tgt_mask = _pad(in_rows, tgt_w)
        tgt_out, _ = _pad(out_rows, tgt_w)
        batches.append(
            ExtendedBatch(src, src_ext_arr, src_mask, tgt_in, tgt_out, tgt_mask, oovs, task)
        )
    return batches


def _clean_field(value):
    return value if isinstance(value, str) and value.strip() else None


def _document_from_fields(text, summary, title):
    text, summary, title = _clean_field(text), _clean_field(summary), _clean_field(title)
    if text is None or (summary is None and title is None):
        return None
    return Document(
        tokenize(text),
        tokenize(summary) if summary else None,
        tokenize(title) if title else None,
    )


def import_corpus(path, format):
    """Read a corpus file; returns (documents, skipped count).

    jsonl: one JSON object per line with string fields text/summary/title.
    tsv: text<TAB>summary<TAB>title, later columns optional. Records
    missing text, or missing both summary and title, are skipped with a
    warning; so are unparsable lines.
    """
    if format not in ("jsonl", "tsv"):
        raise ContractError(f"unknown corpus format {format!r}; expected jsonl or tsv")
    documents = []
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            doc = None
            if format == "jsonl":
                try:
                    record = json.loads(line)
                except json.JSONDecodeError:
                    record = None
                if isinstance(record, dict):
                    doc = _document_from_fields(
                        record.get("text"), record.get("summary"), record.get("title")
                    )
            else:
                cols = line.split("\t")
                doc = _document_from_fields(
                    cols[0],
                    cols[1] if len(cols) > 1 else None,
                    cols[2] if len(cols) > 2 else None,
                )
            if doc is None:
                skipped += 1
                logger.warning("%s:%d: skipping malformed record", path, lineno)
            else:
                documents.append(doc)
    return documents, skipped
