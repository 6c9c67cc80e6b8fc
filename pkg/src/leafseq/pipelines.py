"""Multi-task and transfer training recipes built on the core engine.

Multi-task training interleaves task-tagged batch streams round-robin in
the model's task order, so every optimizer step sees one task and
consecutive steps cycle through tasks. Transfer reuses the shared trunk
(``shared.*``) of a source checkpoint inside a fresh model, optionally
freezing it while a task branch adapts.
"""

import math
import os
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from . import checkpoint as ckptfile
from . import engine
from .data import make_batches
from .optim import AdamState
from .tensor import ContractError, NumericError


@dataclass
class MultiTaskResult:
    losses: list  # (task, loss) per step, in update order
    step: int
    final_path: object


def round_robin_batches(task_pairs, vocab, batch_size, max_src_len=400,
                        max_tgt_len=100, seed=None, tasks=None):
    """Interleave per-task batch streams: one batch per task, cycling.

    ``task_pairs`` maps task name -> (source, target) pairs. Tasks advance
    in ``tasks`` order (default: sorted); when a stream runs out, the
    remaining streams keep cycling. Each stream shuffles independently
    under a seed derived from (seed, task index).
    """
    if tasks is None:
        tasks = sorted(task_pairs)
    unknown = set(task_pairs) - set(tasks)
    if unknown:
        raise ContractError(f"round_robin_batches: tasks {sorted(unknown)} not in task order")
    streams = []
    for index, task in enumerate(tasks):
        if task not in task_pairs:
            continue
        task_seed = None
        if seed is not None:
            task_seed = int(np.random.SeedSequence([seed, index]).generate_state(1)[0])
        streams.append(
            deque(
                make_batches(
                    task_pairs[task], vocab, batch_size, max_src_len, max_tgt_len,
                    seed=task_seed, task=task,
                )
            )
        )
    interleaved = []
    while any(streams):
        for stream in streams:
            if stream:
                interleaved.append(stream.popleft())
    return interleaved


def train_multitask(model, task_pairs, vocab, plan, checkpoint_dir=None):
    """Train one model on several tasks with round-robin batch alternation.

    Tasks cycle in ``model.config.tasks`` order. Returns MultiTaskResult
    with per-step (task, loss) pairs.
    """
    for task in task_pairs:
        if task not in model.config.tasks:
            raise ContractError(f"model has no task branch {task!r}")
    adam = AdamState(alpha=plan.learning_rate)
    losses = []
    step = 0
    for epoch in range(plan.epochs):
        if plan.max_steps is not None and step >= plan.max_steps:
            break
        batches = round_robin_batches(
            task_pairs, vocab, plan.batch_size, plan.max_src_len, plan.max_tgt_len,
            seed=int(np.random.SeedSequence([plan.seed, epoch]).generate_state(1)[0]),
            tasks=[t for t in model.config.tasks if t in task_pairs],
        )
        for batch in batches:
            if plan.max_steps is not None and step >= plan.max_steps:
                break
            value = engine.train_step(model, batch, plan, adam)
            if not math.isfinite(value):
                raise NumericError(f"non-finite loss at step {step + 1}")
            losses.append((batch.task, value))
            step += 1
    final_path = None
    if checkpoint_dir is not None:
        final_path = os.path.join(checkpoint_dir, "last.lnats")
        engine.save_checkpoint(final_path, model, adam, {"step": step})
    return MultiTaskResult(losses, step, final_path)


def transfer_shared(model, checkpoint_path):
    """Copy every ``shared.*`` tensor of the checkpoint into the model.

    All of the model's shared parameters must be present (with matching
    shapes) or nothing is copied. Returns the number of tensors copied.
    """
    shared = list(getattr(model, "shared_parameter_names", lambda: [])())
    if not shared:
        raise ContractError("model has no shared parameters to transfer into")
    tensors, _ = ckptfile.load(checkpoint_path)
    missing = sorted(name for name in shared if name not in tensors)
    if missing:
        raise ContractError(
            f"checkpoint {checkpoint_path} is missing shared parameters: {', '.join(missing)}"
        )
    params = model.named_parameters()
    for name in shared:
        if tensors[name].shape != params[name].data.shape:
            raise ContractError(
                f"transfer_shared: shape mismatch for {name}: "
                f"{tensors[name].shape} vs {params[name].data.shape}"
            )
    for name in shared:
        params[name].data[...] = tensors[name]
    return len(shared)


def freeze_shared(model):
    """Trainable predicate rejecting the model's shared parameter names."""
    shared = set(model.shared_parameter_names())
    return lambda name: name not in shared


def transfer_pipeline(model, source_checkpoint, task, pairs, vocab, plan,
                      checkpoint_dir=None, val_pairs=None, freeze=True):
    """Warm-start ``model`` from a source checkpoint's shared trunk, then
    train the given task branch (shared trunk frozen by default).

    Returns (copied_count, TrainResult).
    """
    copied = transfer_shared(model, source_checkpoint)
    effective = plan
    if freeze:
        effective = replace(plan, trainable=freeze_shared(model))
    result = engine.train(
        model, pairs, vocab, effective,
        checkpoint_dir=checkpoint_dir, val_pairs=val_pairs, task=task,
    )
    return copied, result
