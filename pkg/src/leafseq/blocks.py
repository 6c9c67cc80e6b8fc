"""Reusable seq2seq building blocks.

Embedder, LSTM cells, bidirectional encoding, attention (additive with
optional coverage, or bilinear), temporal attention, attention over prior
decoder states, the pointer-generator decoding step, and the training
losses. All functions are pure over caller-owned state: no block keeps
internal mutable state, so different sequences can run on different
workers.
"""

import numpy as np

from . import tensor as ops
from .tensor import ContractError, ShapeError, Tensor

MASK_SCORE = -1e9  # added to attention scores at padded positions


def uniform_param(rng, shape, scale=0.1):
    """Fresh trainable tensor initialized uniform(-scale, scale)."""
    return Tensor(rng.uniform(-scale, scale, size=shape), requires_grad=True)


class Embedder:
    """Token embedding matrix, optionally tied to the output projection.

    When ``shared`` is set the same storage serves both the input lookup
    and the vocabulary logits (one matrix, two uses).
    """

    def __init__(self, E, shared=False):
        if E.ndim != 2:
            raise ShapeError(f"embedder matrix must be 2-D, got {E.shape}")
        self.E = E
        self.shared = shared

    @property
    def vocab_size(self):
        return self.E.shape[0]

    @property
    def dim(self):
        return self.E.shape[1]

    def __call__(self, token_ids):
        return embed(self, token_ids)

    def named(self, prefix):
        return {f"{prefix}.E": self.E}


def embed(embedder, token_ids):
    """Look up embedding rows; row i equals E[token_ids[i]].

    Ids must already be unk-mapped: anything >= |V| raises.
    """
    return ops.embedding_lookup(embedder.E, np.asarray(token_ids, dtype=np.int64))


class LSTMCellParams:
    """Weights for one LSTM cell: input, forget, output and candidate gates."""

    GATES = ("i", "f", "o", "g")

    def __init__(self, input_dim, hidden_dim, rng=None, forget_bias=1.0):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        if rng is None:
            rng = np.random.default_rng(0)
        for gate in self.GATES:
            setattr(self, f"W_{gate}", uniform_param(rng, (hidden_dim, input_dim)))
            setattr(self, f"U_{gate}", uniform_param(rng, (hidden_dim, hidden_dim)))
            setattr(self, f"b_{gate}", uniform_param(rng, (hidden_dim,)))
        if forget_bias:
            self.b_f.data += forget_bias

    def named(self, prefix):
        out = {}
        for gate in self.GATES:
            for kind in ("W", "U", "b"):
                name = f"{kind}_{gate}"
                out[f"{prefix}.{name}"] = getattr(self, name)
        return out


def lstm_cell(x_t, h_prev, c_prev, params):
    """One LSTM step.

    i = sigmoid(W_i x + U_i h + b_i), f and o likewise, g = tanh(...),
    c_t = f*c_prev + i*g, h_t = o*tanh(c_t).
    """
    if x_t.shape != (params.input_dim,):
        raise ShapeError(f"lstm_cell: input shape {x_t.shape}, expected ({params.input_dim},)")
    gates = {}
    for gate in LSTMCellParams.GATES:
        W = getattr(params, f"W_{gate}")
        U = getattr(params, f"U_{gate}")
        b = getattr(params, f"b_{gate}")
        pre = ops.add(ops.add(ops.matmul(W, x_t), ops.matmul(U, h_prev)), b)
        gates[gate] = ops.tanh(pre) if gate == "g" else ops.sigmoid(pre)
    c_t = ops.add(ops.mul(gates["f"], c_prev), ops.mul(gates["i"], gates["g"]))
    h_t = ops.mul(gates["o"], ops.tanh(c_t))
    return h_t, c_t


class BiLSTMParams:
    """Forward and backward cells of one bidirectional layer."""

    def __init__(self, input_dim, hidden_dim, rng=None, forget_bias=1.0):
        if rng is None:
            rng = np.random.default_rng(0)
        self.fw = LSTMCellParams(input_dim, hidden_dim, rng, forget_bias)
        self.bw = LSTMCellParams(input_dim, hidden_dim, rng, forget_bias)
        self.hidden_dim = hidden_dim

    def named(self, prefix):
        out = self.fw.named(f"{prefix}.fw")
        out.update(self.bw.named(f"{prefix}.bw"))
        return out


class EncoderStates:
    """Per-position bidirectional encoder outputs.

    H is T_src x 2h with padded rows zeroed; ``mask`` marks real tokens.
    ``final_fw``/``final_bw`` are the (h, c) pairs at the sequence ends.
    """

    def __init__(self, H, mask, final_fw, final_bw):
        self.H = H
        self.mask = np.asarray(mask, dtype=np.float64)
        self.final_fw = final_fw
        self.final_bw = final_bw

    @property
    def length(self):
        return self.H.shape[0]


def bilstm_encode(embedded, mask, params):
    """Run a bidirectional LSTM over the unmasked prefix of a sequence.

    Args:
      embedded: T x d tensor of input vectors.
      mask: length-T array, 1.0 for real tokens and 0.0 for padding. Real
        tokens must form a prefix (padding only at the tail).
      params: BiLSTMParams.

    Returns EncoderStates with H[i] = [fw state at i ; bw state at i] for
    real positions and zero rows for padding, which therefore can never
    leak into attention or downstream states.
    """
    T = embedded.shape[0]
    mask = np.asarray(mask, dtype=np.float64)
    L = int(mask.sum())
    if L == 0:
        raise ContractError("bilstm_encode: need at least one unmasked position")
    if not (mask[:L] == 1.0).all() or not (mask[L:] == 0.0).all():
        raise ContractError("bilstm_encode: mask must be a prefix of ones")
    h_dim = params.hidden_dim
    zeros_h = Tensor(np.zeros(h_dim))

    xs = [ops.reshape(ops.slice_(embedded, i, i + 1, axis=0), (embedded.shape[1],)) for i in range(L)]

    fw_states = []
    h, c = zeros_h, zeros_h
    for i in range(L):
        h, c = lstm_cell(xs[i], h, c, params.fw)
        fw_states.append(h)
    final_fw = (h, c)

    bw_states = [None] * L
    h, c = zeros_h, zeros_h
    for i in reversed(range(L)):
        h, c = lstm_cell(xs[i], h, c, params.bw)
        bw_states[i] = h
    final_bw = (h, c)

    rows = [ops.reshape(ops.concat([fw_states[i], bw_states[i]]), (1, 2 * h_dim)) for i in range(L)]
    if L < T:
        rows.append(Tensor(np.zeros((T - L, 2 * h_dim))))
    H = ops.concat(rows, axis=0)
    return EncoderStates(H, mask, final_fw, final_bw)


class AttentionParams:
    """Scoring weights for additive (Bahdanau-style) or bilinear attention."""

    def __init__(self, state_dim, memory_dim, attn_dim=None, mode="additive", rng=None):
        if mode not in ("additive", "bilinear"):
            raise ContractError(f"unknown attention mode {mode!r}")
        self.mode = mode
        if rng is None:
            rng = np.random.default_rng(0)
        if mode == "additive":
            a = attn_dim or state_dim
            self.W_h = uniform_param(rng, (a, memory_dim))
            self.W_s = uniform_param(rng, (a, state_dim))
            self.w_c = uniform_param(rng, (a,))
            self.v = uniform_param(rng, (a,))
            self.b = uniform_param(rng, (a,))
        else:
            self.W_a = uniform_param(rng, (state_dim, memory_dim))

    def named(self, prefix):
        if self.mode == "additive":
            keys = ("W_h", "W_s", "w_c", "v", "b")
        else:
            keys = ("W_a",)
        return {f"{prefix}.{k}": getattr(self, k) for k in keys}


def attention_scores(s_t, enc_states, cov_t, params):
    """Raw (unmasked, unnormalized) attention scores e_t over source positions.

    Additive: e_ti = v . tanh(W_h H_i + W_s s_t + w_c cov_ti + b).
    Bilinear: e_ti = s_t . W_a . H_i. Coverage only applies additively.
    """
    H = enc_states.H
    if params.mode == "bilinear":
        if cov_t is not None:
            raise ContractError("coverage requires additive attention")
        return ops.matmul(H, ops.matmul(s_t, params.W_a))
    hidden = ops.add(ops.matmul(H, ops.transpose(params.W_h)), ops.matmul(params.W_s, s_t))
    if cov_t is not None:
        hidden = ops.add(hidden, ops.mul(ops.reshape(cov_t, (cov_t.shape[0], 1)), params.w_c))
    hidden = ops.broadcast_add_bias(hidden, params.b)
    return ops.matmul(ops.tanh(hidden), params.v)


def masked_softmax(scores, mask):
    """Softmax over unmasked positions; masked scores are pushed to -1e9."""
    mask = np.asarray(mask, dtype=np.float64)
    if mask.sum() == 0:
        raise ContractError("masked_softmax: all positions are masked")
    adjusted = ops.add(scores, Tensor((1.0 - mask) * MASK_SCORE))
    return ops.softmax_rows(adjusted)


def attend(s_t, enc_states, cov_t, params, mode=None):
    """Attention read over encoder states.

    Returns (context c_t, attention row alpha). ``cov_t`` is the coverage
    vector (sum of prior attention rows); pass None when coverage is off.
    """
    if mode is not None and mode != params.mode:
        raise ContractError(f"attend: params are for mode {params.mode!r}, requested {mode!r}")
    e = attention_scores(s_t, enc_states, cov_t, params)
    alpha = masked_softmax(e, enc_states.mask)
    context = ops.matmul(alpha, enc_states.H)
    return context, alpha


def temporal_attend(e_t, score_history, mask=None):
    """Normalize scores with damping by their own exponentiated history.

    e'_ti = exp(e_ti) at the first step, afterwards exp(e_ti) divided by
    the sum of exp(e_ki) over earlier steps k; alpha is e' renormalized.
    Positions attended heavily before are therefore down-weighted.
    """
    if mask is not None:
        mask = np.asarray(mask, dtype=np.float64)
        e_t = ops.add(e_t, Tensor((1.0 - mask) * MASK_SCORE))
    if not score_history:
        return ops.softmax_rows(e_t)
    # shift by the global max: exact invariance of the damped ratios
    shift = float(max(e_t.data.max(), max(e.data.max() for e in score_history)))
    exp_t = ops.exp(ops.sub(e_t, shift))
    denom = ops.exp(ops.sub(score_history[0], shift))
    for e_k in score_history[1:]:
        denom = ops.add(denom, ops.exp(ops.sub(e_k, shift)))
    damped = ops.div(exp_t, denom)
    return ops.div(damped, ops.reduce_sum(damped))


class IntraAttentionParams:
    """Bilinear scores over the decoder's own earlier states."""

    def __init__(self, state_dim, rng=None):
        if rng is None:
            rng = np.random.default_rng(0)
        self.W_d = uniform_param(rng, (state_dim, state_dim))

    def named(self, prefix):
        return {f"{prefix}.W_d": self.W_d}


def intra_decoder_attend(s_t, decoder_history, params):
    """Context over previously emitted decoder states; zeros at the first step."""
    if not decoder_history:
        return Tensor(np.zeros(s_t.shape[0]))
    S = ops.concat([ops.reshape(s, (1, s.shape[0])) for s in decoder_history], axis=0)
    e = ops.matmul(S, ops.matmul(params.W_d, s_t))
    alpha = ops.softmax_rows(e)
    return ops.matmul(alpha, S)


class PointerParams:
    """Generation gate p_gen = sigmoid(w_c.c + w_s.s + w_x.x + b)."""

    def __init__(self, context_dim, state_dim, input_dim, rng=None):
        if rng is None:
            rng = np.random.default_rng(0)
        self.w_c = uniform_param(rng, (context_dim,))
        self.w_s = uniform_param(rng, (state_dim,))
        self.w_x = uniform_param(rng, (input_dim,))
        self.b = uniform_param(rng, (1,))

    def named(self, prefix):
        return {f"{prefix}.{k}": getattr(self, k) for k in ("w_c", "w_s", "w_x", "b")}


class OutputParams:
    """Vocabulary logits through the (possibly shared) embedding matrix.

    logits = E . (W_proj q + b_proj) with q the decoder feature vector, so
    a tied embedder contributes a single storage used in two places.
    """

    def __init__(self, embedder, feature_dim, rng=None):
        if rng is None:
            rng = np.random.default_rng(0)
        self.embedder = embedder
        self.W_proj = uniform_param(rng, (embedder.dim, feature_dim))
        self.b_proj = uniform_param(rng, (embedder.dim,))

    def logits(self, q):
        return ops.matmul(self.embedder.E, ops.add(ops.matmul(self.W_proj, q), self.b_proj))

    def named(self, prefix):
        return {f"{prefix}.W_proj": self.W_proj, f"{prefix}.b_proj": self.b_proj}


class DecoderState:
    """Recurrent decoder carry: hidden, cell, coverage and step histories."""

    def __init__(self, h, c, coverage, attn_history=(), dec_history=(), score_history=()):
        self.h = h
        self.c = c
        self.coverage = coverage
        self.attn_history = list(attn_history)
        self.dec_history = list(dec_history)
        self.score_history = list(score_history)


class ReduceStateParams:
    """Maps final bidirectional encoder states to the decoder's initial state."""

    def __init__(self, hidden_dim, rng=None):
        if rng is None:
            rng = np.random.default_rng(0)
        self.W_h = uniform_param(rng, (hidden_dim, 2 * hidden_dim))
        self.b_h = uniform_param(rng, (hidden_dim,))
        self.W_c = uniform_param(rng, (hidden_dim, 2 * hidden_dim))
        self.b_c = uniform_param(rng, (hidden_dim,))

    def named(self, prefix):
        return {f"{prefix}.{k}": getattr(self, k) for k in ("W_h", "b_h", "W_c", "b_c")}


def init_decoder_state(enc_states, params):
    """Fresh DecoderState: reduced encoder finals, zero coverage, empty histories."""
    h_cat = ops.concat([enc_states.final_fw[0], enc_states.final_bw[0]])
    c_cat = ops.concat([enc_states.final_fw[1], enc_states.final_bw[1]])
    h0 = ops.tanh(ops.add(ops.matmul(params.W_h, h_cat), params.b_h))
    c0 = ops.tanh(ops.add(ops.matmul(params.W_c, c_cat), params.b_c))
    return DecoderState(h0, c0, Tensor(np.zeros(enc_states.length)))


class StepOutput:
    """One decode step: extended-vocab distribution, gate, attention, new state."""

    def __init__(self, p_final, p_gen, alpha, state):
        self.p_final = p_final
        self.p_gen = p_gen
        self.alpha = alpha
        self.state = state


def pointer_generator_step(
    x_t,
    state,
    enc_states,
    src_ext_ids,
    n_oov,
    params,
    coverage=False,
    temporal=False,
    intra=False,
):
    """One pointer-generator decode step.

    Args:
      x_t: embedding of the previous output token (d_emb,).
      state: DecoderState to advance.
      enc_states: EncoderStates of the source.
      src_ext_ids: per-position extended ids of the source (in-vocab tokens
        keep their vocab id, OOVs get |V|+k).
      n_oov: number of source OOV slots in this example.
      params: object with .lstm, .attn, .pointer, .out and optionally .intra.
      coverage / temporal / intra: mechanism switches.

    Returns a StepOutput whose P_final mixes the vocabulary distribution
    (weight p_gen) with attention mass scattered onto extended ids
    (weight 1 - p_gen).
    """
    vocab_size = params.out.embedder.vocab_size
    src_ext_ids = np.asarray(src_ext_ids, dtype=np.int64)
    if src_ext_ids.size and src_ext_ids.max() >= vocab_size + n_oov:
        raise ContractError(
            f"extended id {int(src_ext_ids.max())} outside declared range "
            f"|V|+{n_oov} = {vocab_size + n_oov}"
        )

    h_t, c_cell = lstm_cell(x_t, state.h, state.c, params.lstm)
    s_t = h_t

    cov_t = state.coverage if coverage else None
    e = attention_scores(s_t, enc_states, cov_t, params.attn)
    if temporal:
        alpha = temporal_attend(e, state.score_history, enc_states.mask)
    else:
        alpha = masked_softmax(e, enc_states.mask)
    context = ops.matmul(alpha, enc_states.H)

    feats = [s_t, context]
    if intra:
        feats.append(intra_decoder_attend(s_t, state.dec_history, params.intra))
    q = ops.concat(feats)

    gate_pre = ops.add(
        ops.add(
            ops.reshape(ops.matmul(params.pointer.w_c, context), (1,)),
            ops.reshape(ops.matmul(params.pointer.w_s, s_t), (1,)),
        ),
        ops.add(ops.reshape(ops.matmul(params.pointer.w_x, x_t), (1,)), params.pointer.b),
    )
    p_gen = ops.sigmoid(gate_pre)

    p_vocab = ops.softmax_rows(params.out.logits(q))
    if n_oov:
        p_vocab_ext = ops.concat([p_vocab, Tensor(np.zeros(n_oov))])
    else:
        p_vocab_ext = p_vocab
    copy_dist = ops.scatter_add(alpha, src_ext_ids, vocab_size + n_oov)
    p_final = ops.add(ops.mul(p_gen, p_vocab_ext), ops.mul(ops.sub(1.0, p_gen), copy_dist))

    new_state = DecoderState(
        h_t,
        c_cell,
        ops.add(state.coverage, alpha),
        state.attn_history + [alpha],
        state.dec_history + [s_t],
        state.score_history + [e] if temporal else state.score_history,
    )
    return StepOutput(p_final, p_gen, alpha, new_state)


def coverage_loss(alphas, covs, mask=None):
    """Mean over steps of sum_i min(alpha_ti, cov_ti).

    Zero when attention never revisits a position; grows with repeated
    attention, which is what the penalty discourages.
    """
    if len(alphas) != len(covs):
        raise ShapeError(f"coverage_loss: {len(alphas)} alpha rows vs {len(covs)} coverage rows")
    if not alphas:
        return Tensor(0.0)
    mask_t = None if mask is None else Tensor(np.asarray(mask, dtype=np.float64))
    total = None
    for alpha, cov in zip(alphas, covs):
        term = ops.minimum(alpha, cov)
        if mask_t is not None:
            term = ops.mul(term, mask_t)
        step = ops.reduce_sum(term)
        total = step if total is None else ops.add(total, step)
    return ops.mul(total, 1.0 / len(alphas))


def nll_loss(p_finals, targets, mask=None, clamp=1e-12):
    """Mean negative log-likelihood of the targets over unmasked steps."""
    targets = np.asarray(targets, dtype=np.int64)
    if len(p_finals) != targets.shape[0]:
        raise ShapeError(f"nll_loss: {len(p_finals)} distributions vs {targets.shape[0]} targets")
    if mask is None:
        mask = np.ones(targets.shape[0])
    mask = np.asarray(mask, dtype=np.float64)
    total = None
    count = 0
    for p, tgt, m in zip(p_finals, targets, mask):
        if not m:
            continue
        if tgt < 0 or tgt >= p.shape[0]:
            raise ContractError(f"nll_loss: target id {int(tgt)} outside distribution of size {p.shape[0]}")
        picked = ops.slice_(p, int(tgt), int(tgt) + 1)
        term = ops.mul(ops.log(ops.maximum(picked, clamp)), -1.0)
        total = term if total is None else ops.add(total, term)
        count += 1
    if count == 0:
        return Tensor(0.0)
    return ops.reshape(ops.mul(total, 1.0 / count), ())
