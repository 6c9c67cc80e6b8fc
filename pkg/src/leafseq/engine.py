"""Task-independent training: loops, validation selection, reuse, generation.

The engine never looks inside a model; it drives the encode /
initial_state / step protocol, moves parameters through named maps, and
persists progress as checkpoint files that are sufficient to resume
bit-exactly (parameters, optimizer moments, and the position in the
deterministic batch stream).
"""

import fnmatch
import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

from . import checkpoint as ckptfile
from . import tensor as ops
from .beam import beam_search
from .blocks import coverage_loss, nll_loss
from .data import EOS_ID, decode_extended, encode_with_oov, make_batches
from .optim import AdamState, adam_step, clip_global_norm
from .rouge import corpus_rouge
from .tensor import ContractError, Graph, NumericError, backward


@dataclass
class TrainPlan:
    """Schedule plus the trainable-name predicate and stream geometry."""

    epochs: int = 1
    batch_size: int = 4
    learning_rate: float = 1e-3
    clip_norm: float = 2.0
    n_best: int = 3
    seed: int = 0
    max_steps: int = None
    max_src_len: int = 400
    max_tgt_len: int = 100
    coverage_weight: float = 1.0
    trainable: object = None  # callable name -> bool; None trains everything

    def is_trainable(self, name):
        return True if self.trainable is None else bool(self.trainable(name))


@dataclass
class TrainResult:
    losses: list
    checkpoints: list  # ranked {"path", "step", "score"} kept after selection
    final_path: object
    step: int


def _epoch_seed(seed, epoch):
    return int(np.random.SeedSequence([seed, epoch]).generate_state(1)[0])


def config_hash(config):
    return hashlib.sha256(repr(config).encode("utf-8")).hexdigest()[:12]


def example_loss(view, batch, row, coverage_weight=1.0):
    """Teacher-forced loss of one example: mean NLL plus weighted coverage."""
    enc = view.encode(batch.src[row], batch.src_mask[row])
    state = view.initial_state(enc)
    steps = int(batch.tgt_mask[row].sum())
    p_finals, alphas, covs, targets = [], [], [], []
    for t in range(steps):
        covs.append(state.coverage)
        out = view.step(int(batch.tgt_in[row, t]), state, enc, batch.src_ext[row], batch.n_oov(row))
        p_finals.append(out.p_final)
        alphas.append(out.alpha)
        targets.append(int(batch.tgt_out[row, t]))
        state = out.state
    loss = nll_loss(p_finals, targets)
    if view.coverage and coverage_weight:
        loss = ops.add(loss, ops.mul(coverage_loss(alphas, covs), coverage_weight))
    return loss


def train_step(model, batch, plan, adam):
    """One optimizer update on one batch; returns the batch loss value."""
    view = model.view(batch.task)
    with Graph() as graph:
        total = None
        for row in range(batch.size):
            row_loss = example_loss(view, batch, row, plan.coverage_weight)
            total = row_loss if total is None else ops.add(total, row_loss)
        loss = ops.mul(total, 1.0 / batch.size)
    grad_map = backward(graph, loss)
    params, grads = {}, {}
    for name, tensor in model.named_parameters().items():
        if not plan.is_trainable(name):
            continue
        grad = grad_map.get(tensor)
        if grad is not None:
            params[name] = tensor
            grads[name] = grad
    clip_global_norm(grads, plan.clip_norm)
    if grads:
        adam_step(params, grads, adam)
    return float(loss.data)


def validate_nll(model, batches):
    """Mean per-example NLL (no coverage term); the selection criterion."""
    total, count = 0.0, 0
    for batch in batches:
        view = model.view(batch.task)
        for row in range(batch.size):
            total += float(example_loss(view, batch, row, coverage_weight=0.0).data)
            count += 1
    if count == 0:
        raise ContractError("validate_nll: empty validation set")
    return total / count


def save_checkpoint(path, model, adam=None, metadata=None):
    """Write model parameters (and optimizer state) as a self-describing file.

    The metadata records the model's architecture config and kind, so
    ``load_model`` can rebuild the model from the file alone.
    """
    tensors = dict(model.named_parameters())
    meta = {str(k): str(v) for k, v in (metadata or {}).items()}
    if adam is not None:
        for name, m in adam.m.items():
            tensors[f"optim.m.{name}"] = m
        for name, v in adam.v.items():
            tensors[f"optim.v.{name}"] = v
        meta["optim.t"] = str(adam.t)
    meta.setdefault("config_hash", config_hash(getattr(model, "config", None)))
    config = getattr(model, "config", None)
    if config is not None:
        meta.setdefault("config", json.dumps(asdict(config), sort_keys=True, separators=(",", ":")))
        meta.setdefault(
            "model_kind",
            "multitask" if hasattr(model, "shared_parameter_names") else "pointer_generator",
        )
    ckptfile.save(path, tensors, meta)
    return path


def load_model(path):
    """Rebuild the model a checkpoint describes and load its parameters.

    Returns (model, metadata). Requires the checkpoint to carry the
    ``config`` metadata that ``save_checkpoint`` writes.
    """
    from .models import ModelConfig, build_multitask, build_pointer_generator

    tensors, meta = ckptfile.load(path)
    if "config" not in meta:
        raise ContractError(f"checkpoint {path} does not describe its model architecture")
    raw = json.loads(meta["config"])
    raw["tasks"] = tuple(raw["tasks"])
    config = ModelConfig(**raw)
    if meta.get("model_kind") == "multitask":
        model = build_multitask(config)
    else:
        model = build_pointer_generator(config)
    for name, tensor in model.named_parameters().items():
        if name not in tensors:
            raise ContractError(f"checkpoint {path} is missing parameter {name}")
        tensor.data[...] = tensors[name]
    return model, meta


def load_checkpoint(path, model, adam=None):
    """Restore every model parameter (and optimizer state); returns metadata."""
    tensors, meta = ckptfile.load(path)
    for name, tensor in model.named_parameters().items():
        if name not in tensors:
            raise ContractError(f"checkpoint {path} is missing parameter {name}")
        if tensors[name].shape != tensor.data.shape:
            raise ContractError(
                f"checkpoint shape {tensors[name].shape} != model shape "
                f"{tensor.data.shape} for {name}"
            )
        tensor.data[...] = tensors[name]
    if adam is not None:
        adam.m = {n[len("optim.m."):]: a for n, a in tensors.items() if n.startswith("optim.m.")}
        adam.v = {n[len("optim.v."):]: a for n, a in tensors.items() if n.startswith("optim.v.")}
        adam.t = int(meta.get("optim.t", 0))
    return meta


def load_partial(model, path, name_filter):
    """Copy checkpoint tensors whose names match into the model.

    ``name_filter`` is a glob pattern (e.g. "shared.*") or a predicate.
    Only names present in both checkpoint and model are considered; a
    matched name with a different shape is an error. Returns the number of
    tensors loaded.
    """
    if callable(name_filter):
        matches = name_filter
    else:
        matches = lambda name: fnmatch.fnmatchcase(name, name_filter)
    tensors, _ = ckptfile.load(path)
    count = 0
    for name, tensor in model.named_parameters().items():
        if name not in tensors or not matches(name):
            continue
        if tensors[name].shape != tensor.data.shape:
            raise ContractError(
                f"load_partial: shape mismatch for {name}: "
                f"{tensors[name].shape} vs {tensor.data.shape}"
            )
        tensor.data[...] = tensors[name]
        count += 1
    return count


def train(
    model,
    pairs,
    vocab,
    plan,
    checkpoint_dir=None,
    val_pairs=None,
    resume_from=None,
    task=None,
):
    """Run the plan; returns TrainResult.

    The batch stream of epoch e is a pure function of (pairs, plan.seed,
    e), so resuming from the final checkpoint continues the exact stream
    an uninterrupted run would have seen. Validation (and n-best
    checkpoint retention) runs at the end of each epoch when ``val_pairs``
    and ``checkpoint_dir`` are given.
    """
    adam = AdamState(alpha=plan.learning_rate)
    epoch, offset, global_step = 0, 0, 0
    if resume_from is not None:
        meta = load_checkpoint(resume_from, model, adam)
        epoch = int(meta.get("epoch", 0))
        offset = int(meta.get("offset", 0))
        global_step = int(meta.get("step", 0))

    val_batches = None
    if val_pairs is not None:
        val_batches = make_batches(
            val_pairs, vocab, plan.batch_size, plan.max_src_len, plan.max_tgt_len, task=task
        )

    losses = []
    kept = []

    def steps_exhausted():
        return plan.max_steps is not None and global_step >= plan.max_steps

    while epoch < plan.epochs and not steps_exhausted():
        batches = make_batches(
            pairs,
            vocab,
            plan.batch_size,
            plan.max_src_len,
            plan.max_tgt_len,
            seed=_epoch_seed(plan.seed, epoch),
            task=task,
        )
        while offset < len(batches) and not steps_exhausted():
            value = train_step(model, batches[offset], plan, adam)
            if not math.isfinite(value):
                raise NumericError(f"non-finite loss at step {global_step + 1}")
            losses.append(value)
            global_step += 1
            offset += 1
        if offset < len(batches):
            break  # mid-epoch stop: resume position is (epoch, offset)
        epoch += 1
        offset = 0
        if val_batches is not None and checkpoint_dir is not None:
            score = validate_nll(model, val_batches)
            path = os.path.join(checkpoint_dir, f"ckpt-step{global_step:06d}.lnats")
            save_checkpoint(
                path, model, adam,
                {"epoch": epoch, "offset": 0, "step": global_step, "val_nll": score},
            )
            kept.append({"path": path, "step": global_step, "score": score})
            kept.sort(key=lambda entry: (entry["score"], entry["step"]))
            for entry in kept[plan.n_best:]:
                os.remove(entry["path"])
            kept = kept[: plan.n_best]

    final_path = None
    if checkpoint_dir is not None:
        final_path = os.path.join(checkpoint_dir, "last.lnats")
        save_checkpoint(
            final_path, model, adam, {"epoch": epoch, "offset": offset, "step": global_step}
        )
    return TrainResult(losses, kept, final_path, global_step)


def validate_select(model, checkpoint_paths, val_pairs, vocab, n_best, batch_size=8, task=None):
    """Rank checkpoints by validation NLL; keep only the top n_best on disk.

    Ties rank the earlier training step first. The model is left holding
    the best checkpoint's parameters. Returns the ranked kept entries.
    """
    if n_best < 1:
        raise ContractError("n_best must be >= 1")
    if not checkpoint_paths:
        raise ContractError("validate_select: no checkpoints given")
    batches = make_batches(val_pairs, vocab, batch_size, task=task)
    entries = []
    for path in checkpoint_paths:
        meta = load_checkpoint(path, model)
        score = validate_nll(model, batches)
        entries.append({"path": path, "step": int(meta.get("step", 0)), "score": score})
    entries.sort(key=lambda entry: (entry["score"], entry["step"]))
    for entry in entries[n_best:]:
        os.remove(entry["path"])
    kept = entries[:n_best]
    load_checkpoint(kept[0]["path"], model)
    return kept


def test_generate(view, pairs, vocab, beam=4, max_len=20):
    """Decode each (source, reference) pair; returns (records, rouge report).

    Records hold source/reference/generated token lists plus the winning
    hypothesis. An empty pair list yields ([], {}).
    """
    records = []
    for src_tokens, ref_tokens in pairs:
        ids, ext, oov = encode_with_oov(src_tokens, vocab)
        hyps = beam_search(view, ids, np.ones(len(ids)), ext, len(oov), beam=beam, max_len=max_len)
        best = hyps[0]
        tokens = list(best.tokens)
        if tokens and tokens[-1] == EOS_ID:
            tokens = tokens[:-1]
        records.append(
            {
                "source": list(src_tokens),
                "reference": list(ref_tokens),
                "generated": decode_extended(tokens, vocab, oov),
                "hypothesis": best,
            }
        )
    if not records:
        return [], {}
    report = corpus_rouge([(r["generated"], r["reference"]) for r in records])
    return records, report
