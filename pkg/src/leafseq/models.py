"""Assembled models: pointer-generator networks and the shared multi-task family.

A multi-task model owns exactly one embedding matrix, one first-layer
bidirectional encoder and one output projection; every task branch adds
its own second encoder layer and pointer-generator decoder. Both model
kinds expose the same per-example protocol (encode / initial_state /
step) that training, beam search and the service consume.
"""

from dataclasses import dataclass, field

import numpy as np

from . import data
from .blocks import (
    AttentionParams,
    BiLSTMParams,
    Embedder,
    IntraAttentionParams,
    LSTMCellParams,
    OutputParams,
    PointerParams,
    ReduceStateParams,
    bilstm_encode,
    embed,
    init_decoder_state,
    pointer_generator_step,
    uniform_param,
)
from .tensor import ContractError

TASKS = ("newsroom_summary", "newsroom_headline", "cnndm_summary", "bytecup_headline")


@dataclass
class ModelConfig:
    d_emb: int
    hidden: int
    vocab_size: int
    enc_layers: int = 1
    attn_dim: int = None
    attention_mode: str = "additive"
    coverage: bool = False
    temporal: bool = False
    intra: bool = False
    seed: int = 0
    tasks: tuple = TASKS

    def validate(self):
        for name in ("d_emb", "hidden", "vocab_size", "enc_layers"):
            if getattr(self, name) <= 0:
                raise ContractError(f"config {name} must be positive, got {getattr(self, name)}")
        if self.vocab_size <= len(data.SPECIAL_TOKENS):
            raise ContractError("vocab_size must exceed the special-token count")
        return self


def _feature_dim(config):
    # decoder feature q = [s_t ; context ; optional intra context]
    return 3 * config.hidden + (config.hidden if config.intra else 0)


class _DecoderParams:
    """Per-task decode-step weights (the shared output layer lives outside)."""

    def __init__(self, config, rng):
        h = config.hidden
        self.lstm = LSTMCellParams(config.d_emb, h, rng)
        self.attn = AttentionParams(h, 2 * h, config.attn_dim, config.attention_mode, rng)
        self.pointer = PointerParams(2 * h, h, config.d_emb, rng)
        self.intra = IntraAttentionParams(h, rng) if config.intra else None

    def named(self, prefix):
        out = self.lstm.named(f"{prefix}.lstm")
        out.update(self.attn.named(f"{prefix}.attn"))
        out.update(self.pointer.named(f"{prefix}.pointer"))
        if self.intra is not None:
            out.update(self.intra.named(f"{prefix}.intra"))
        return out


class _StepParams:
    """What one pointer_generator_step consumes: branch weights + output layer."""

    def __init__(self, decoder, out):
        self.lstm = decoder.lstm
        self.attn = decoder.attn
        self.pointer = decoder.pointer
        self.intra = decoder.intra
        self.out = out


def _encode_stack(embedded, mask, layers):
    states = None
    for layer in layers:
        source = embedded if states is None else states.H
        states = bilstm_encode(source, mask, layer)
    return states


class PointerGeneratorModel:
    """Single-task encoder + pointer-generator decoder."""

    def __init__(self, config):
        self.config = config.validate()
        rng = np.random.default_rng(config.seed)
        self.embedder = Embedder(
            uniform_param(rng, (config.vocab_size, config.d_emb)), shared=True
        )
        in_dims = [config.d_emb] + [2 * config.hidden] * (config.enc_layers - 1)
        self.encoder = [BiLSTMParams(d, config.hidden, rng) for d in in_dims]
        self.reduce = ReduceStateParams(config.hidden, rng)
        self.decoder = _DecoderParams(config, rng)
        self.output = OutputParams(self.embedder, _feature_dim(config), rng)

    @property
    def vocab_size(self):
        return self.config.vocab_size

    @property
    def coverage(self):
        return self.config.coverage

    def view(self, task=None):
        return self

    def encode(self, src_ids, src_mask):
        return _encode_stack(embed(self.embedder, src_ids), src_mask, self.encoder)

    def initial_state(self, enc_states):
        return init_decoder_state(enc_states, self.reduce)

    def step(self, prev_id, state, enc_states, src_ext_ids, n_oov):
        token = int(prev_id)
        if token >= self.vocab_size:  # copied OOV feeds back as unk
            token = data.UNK_ID
        x_t = embed(self.embedder, [token]).reshape((self.config.d_emb,))
        return pointer_generator_step(
            x_t,
            state,
            enc_states,
            src_ext_ids,
            n_oov,
            _StepParams(self.decoder, self.output),
            coverage=self.config.coverage,
            temporal=self.config.temporal,
            intra=self.config.intra,
        )

    def named_parameters(self):
        out = self.embedder.named("embedder")
        for i, layer in enumerate(self.encoder):
            out.update(layer.named(f"encoder.{i}"))
        out.update(self.reduce.named("reduce"))
        out.update(self.decoder.named("decoder"))
        out.update(self.output.named("output"))
        return out


class _TaskBranch:
    """Second encoder layer + decoder weights of one task."""

    def __init__(self, config, rng):
        self.encoder2 = BiLSTMParams(2 * config.hidden, config.hidden, rng)
        self.reduce = ReduceStateParams(config.hidden, rng)
        self.decoder = _DecoderParams(config, rng)

    def named(self, prefix):
        out = self.encoder2.named(f"{prefix}.encoder")
        out.update(self.reduce.named(f"{prefix}.reduce"))
        out.update(self.decoder.named(f"{prefix}.decoder"))
        return out


class TaskView:
    """One task's slice of a multi-task model, with the single-model protocol."""

    def __init__(self, model, task):
        self.model = model
        self.task = task
        self.branch = model.branches[task]

    @property
    def vocab_size(self):
        return self.model.config.vocab_size

    @property
    def coverage(self):
        return self.model.config.coverage

    def encode(self, src_ids, src_mask):
        embedded = embed(self.model.embedder, src_ids)
        return _encode_stack(embedded, src_mask, [self.model.encoder1, self.branch.encoder2])

    def initial_state(self, enc_states):
        return init_decoder_state(enc_states, self.branch.reduce)

    def step(self, prev_id, state, enc_states, src_ext_ids, n_oov):
        config = self.model.config
        token = int(prev_id)
        if token >= config.vocab_size:
            token = data.UNK_ID
        x_t = embed(self.model.embedder, [token]).reshape((config.d_emb,))
        return pointer_generator_step(
            x_t,
            state,
            enc_states,
            src_ext_ids,
            n_oov,
            _StepParams(self.branch.decoder, self.model.output),
            coverage=config.coverage,
            temporal=config.temporal,
            intra=config.intra,
        )

    def named_parameters(self):
        return self.model.named_parameters()


class MultiTaskModel:
    """Shared embedder/encoder/output with per-task branches (one tag per batch)."""

    def __init__(self, config):
        self.config = config.validate()
        if not config.tasks:
            raise ContractError("multi-task model needs at least one task")
        rng = np.random.default_rng(config.seed)
        self.embedder = Embedder(
            uniform_param(rng, (config.vocab_size, config.d_emb)), shared=True
        )
        self.encoder1 = BiLSTMParams(config.d_emb, config.hidden, rng)
        self.output = OutputParams(self.embedder, _feature_dim(config), rng)
        self.branches = {task: _TaskBranch(config, rng) for task in config.tasks}

    @property
    def vocab_size(self):
        return self.config.vocab_size

    @property
    def tasks(self):
        return tuple(self.branches)

    def view(self, task):
        if task not in self.branches:
            raise ContractError(f"unknown task {task!r}; have {sorted(self.branches)}")
        return TaskView(self, task)

    def named_parameters(self):
        out = self.embedder.named("shared.embedder")
        out.update(self.encoder1.named("shared.encoder"))
        out.update(self.output.named("shared.output"))
        for task, branch in self.branches.items():
            out.update(branch.named(f"task.{task}"))
        return out

    def shared_parameter_names(self):
        return [name for name in self.named_parameters() if name.startswith("shared.")]


def build_pointer_generator(config):
    return PointerGeneratorModel(config)


def build_multitask(config):
    return MultiTaskModel(config)


def count_params(model):
    """Parameter totals, shared storage counted once.

    Returns {"total": n, "by_module": {prefix: n}} where task parameters
    group under "task.<name>" and everything else under its first name
    segment.
    """
    seen = set()
    by_module = {}
    total = 0
    for name, tensor in sorted(model.named_parameters().items()):
        if id(tensor) in seen:
            continue
        seen.add(id(tensor))
        parts = name.split(".")
        group = ".".join(parts[:2]) if parts[0] == "task" else parts[0]
        by_module[group] = by_module.get(group, 0) + tensor.data.size
        total += tensor.data.size
    return {"total": total, "by_module": by_module}
