import math

import numpy as np
import pytest

from leafseq import blocks
from leafseq import tensor as T
from leafseq.blocks import (
    AttentionParams,
    BiLSTMParams,
    DecoderState,
    Embedder,
    LSTMCellParams,
    OutputParams,
    PointerParams,
    ReduceStateParams,
    attend,
    attention_scores,
    bilstm_encode,
    coverage_loss,
    embed,
    init_decoder_state,
    intra_decoder_attend,
    lstm_cell,
    nll_loss,
    pointer_generator_step,
    temporal_attend,
)
from leafseq.gradcheck import grad_check
from leafseq.tensor import ContractError, Tensor


def make_embedder(rng, vocab=10, dim=4, shared=True):
    return Embedder(blocks.uniform_param(rng, (vocab, dim)), shared=shared)


class TinyDecoderParams:
    def __init__(self, rng, d_emb=4, h=5, vocab=8, mode="additive"):
        self.lstm = LSTMCellParams(d_emb, h, rng)
        self.attn = AttentionParams(h, 2 * h, mode=mode, rng=rng)
        self.pointer = PointerParams(2 * h, h, d_emb, rng)
        embedder = Embedder(blocks.uniform_param(rng, (vocab, d_emb)), shared=True)
        self.out = OutputParams(embedder, 3 * h, rng)
        self.embedder = embedder

    def named(self):
        out = {"embedder.E": self.embedder.E}
        out.update(self.lstm.named("decoder.lstm"))
        out.update(self.attn.named("decoder.attn"))
        out.update(self.pointer.named("decoder.pointer"))
        out.update(self.out.named("decoder.out"))
        return out


def make_encoder_setup(rng, d_emb=4, h=5, T_src=4):
    enc_params = BiLSTMParams(d_emb, h, rng)
    reduce_params = ReduceStateParams(h, rng)
    embedded = Tensor(rng.normal(size=(T_src, d_emb)))
    enc = bilstm_encode(embedded, np.ones(T_src), enc_params)
    return enc_params, reduce_params, enc


# --- embedder ---------------------------------------------------------------


def test_embed_same_id_same_row():
    rng = np.random.default_rng(0)
    emb = make_embedder(rng)
    out = embed(emb, [0, 0])
    np.testing.assert_array_equal(out.data[0], out.data[1])
    np.testing.assert_array_equal(out.data[0], emb.E.data[0])


def test_embed_unknown_id_is_unk_row():
    rng = np.random.default_rng(1)
    emb = make_embedder(rng)
    unk = 1
    out = embed(emb, [unk])
    np.testing.assert_array_equal(out.data[0], emb.E.data[unk])


def test_embed_out_of_range():
    rng = np.random.default_rng(2)
    emb = make_embedder(rng, vocab=5)
    with pytest.raises(IndexError):
        embed(emb, [5])


def test_embed_gradient_is_row_accumulation():
    rng = np.random.default_rng(3)
    E = blocks.uniform_param(rng, (6, 3))
    emb = Embedder(E)
    err = grad_check(lambda e: T.reduce_sum(embed(Embedder(e), [3])), E, eps=1e-6)
    assert err < 1e-4
    with T.Graph() as g:
        loss = T.reduce_sum(embed(emb, [3, 3]))
    T.backward(g, loss)
    expected = np.zeros((6, 3))
    expected[3] = 2.0
    np.testing.assert_allclose(E.grad, expected)


# --- lstm -------------------------------------------------------------------


def zero_params(p):
    for name, t in p.named("x").items():
        t.data[...] = 0.0
    return p


def test_lstm_cell_zero_params_gate_pattern():
    # all gates sit at sigmoid(0)=0.5 and the candidate at tanh(0)=0
    p = zero_params(LSTMCellParams(3, 2, np.random.default_rng(0)))
    c_prev = Tensor(np.array([0.8, -0.4]))
    h, c = lstm_cell(Tensor(np.ones(3)), Tensor(np.zeros(2)), c_prev, p)
    np.testing.assert_allclose(c.data, 0.5 * c_prev.data)
    np.testing.assert_allclose(h.data, 0.5 * np.tanh(0.5 * c_prev.data))


def test_lstm_cell_all_zero():
    p = zero_params(LSTMCellParams(3, 2, np.random.default_rng(0)))
    h, c = lstm_cell(Tensor(np.zeros(3)), Tensor(np.zeros(2)), Tensor(np.zeros(2)), p)
    np.testing.assert_array_equal(h.data, np.zeros(2))
    np.testing.assert_array_equal(c.data, np.zeros(2))


def test_lstm_cell_scalar_hand_computation():
    p = LSTMCellParams(1, 1, np.random.default_rng(0), forget_bias=0.0)
    for name, t in p.named("x").items():
        t.data[...] = 1.0
    h, c = lstm_cell(Tensor(np.ones(1)), Tensor(np.zeros(1)), Tensor(np.zeros(1)), p)
    # pre-activation of every gate is 1*1 + 1*0 + 1 = 2
    sig2 = 1.0 / (1.0 + math.exp(-2.0))
    g = math.tanh(2.0)
    c_ref = sig2 * 0.0 + sig2 * g
    h_ref = sig2 * math.tanh(c_ref)
    assert c.data[0] == pytest.approx(c_ref, abs=1e-12)
    assert h.data[0] == pytest.approx(h_ref, abs=1e-12)


def test_lstm_cell_dim_mismatch():
    p = LSTMCellParams(3, 2, np.random.default_rng(0))
    with pytest.raises(T.ShapeError):
        lstm_cell(Tensor(np.zeros(4)), Tensor(np.zeros(2)), Tensor(np.zeros(2)), p)


# --- encoder ----------------------------------------------------------------


def test_bilstm_length_one():
    rng = np.random.default_rng(4)
    p = BiLSTMParams(3, 2, rng)
    x = Tensor(rng.normal(size=(1, 3)))
    enc = bilstm_encode(x, np.ones(1), p)
    x0 = Tensor(x.data[0])
    h_fw, _ = lstm_cell(x0, Tensor(np.zeros(2)), Tensor(np.zeros(2)), p.fw)
    h_bw, _ = lstm_cell(x0, Tensor(np.zeros(2)), Tensor(np.zeros(2)), p.bw)
    np.testing.assert_allclose(enc.H.data[0], np.concatenate([h_fw.data, h_bw.data]))


def test_bilstm_palindrome_with_tied_directions():
    rng = np.random.default_rng(5)
    p = BiLSTMParams(3, 2, rng)
    for (_, src), (_, dst) in zip(sorted(p.fw.named("f").items()), sorted(p.bw.named("b").items())):
        dst.data[...] = src.data
    row = rng.normal(size=3)
    mid = rng.normal(size=3)
    x = Tensor(np.stack([row, mid, row]))  # palindrome
    enc = bilstm_encode(x, np.ones(3), p)
    h = 2
    for i in range(3):
        np.testing.assert_allclose(enc.H.data[i, :h], enc.H.data[2 - i, h:], atol=1e-12)


def test_bilstm_masked_tail_does_not_change_prefix():
    rng = np.random.default_rng(6)
    p = BiLSTMParams(3, 2, rng)
    full = rng.normal(size=(5, 3))
    mask = np.array([1.0, 1.0, 1.0, 0.0, 0.0])
    enc_padded = bilstm_encode(Tensor(full), mask, p)
    enc_short = bilstm_encode(Tensor(full[:3]), np.ones(3), p)
    np.testing.assert_array_equal(enc_padded.H.data[:3], enc_short.H.data)
    np.testing.assert_array_equal(enc_padded.H.data[3:], np.zeros((2, 4)))


def test_bilstm_empty_is_contract_error():
    p = BiLSTMParams(3, 2, np.random.default_rng(0))
    with pytest.raises(ContractError):
        bilstm_encode(Tensor(np.zeros((2, 3))), np.zeros(2), p)


# --- attention --------------------------------------------------------------


def test_attend_identical_rows_uniform():
    rng = np.random.default_rng(7)
    p = AttentionParams(2, 4, rng=rng)
    H = Tensor(np.tile(rng.normal(size=(1, 4)), (5, 1)))
    enc = blocks.EncoderStates(H, np.ones(5), None, None)
    _, alpha = attend(Tensor(rng.normal(size=2)), enc, None, p)
    np.testing.assert_allclose(alpha.data, np.full(5, 0.2), atol=1e-12)


def test_attend_single_position():
    rng = np.random.default_rng(8)
    p = AttentionParams(2, 4, rng=rng)
    H = Tensor(rng.normal(size=(1, 4)))
    enc = blocks.EncoderStates(H, np.ones(1), None, None)
    c, alpha = attend(Tensor(rng.normal(size=2)), enc, None, p)
    np.testing.assert_allclose(alpha.data, [1.0])
    np.testing.assert_allclose(c.data, H.data[0])


def test_attend_bilinear_hand_2x2():
    p = AttentionParams(2, 2, mode="bilinear", rng=np.random.default_rng(9))
    W = p.W_a.data
    s = np.array([0.3, -1.1])
    H = np.array([[0.5, 0.2], [-0.4, 1.0]])
    enc = blocks.EncoderStates(Tensor(H), np.ones(2), None, None)
    e = attention_scores(Tensor(s), enc, None, p)
    expected = np.array([s @ W @ H[0], s @ W @ H[1]])
    np.testing.assert_allclose(e.data, expected, atol=1e-12)


def test_attend_masked_positions_get_no_mass():
    rng = np.random.default_rng(10)
    p = AttentionParams(2, 4, rng=rng)
    H = Tensor(rng.normal(size=(4, 4)))
    enc = blocks.EncoderStates(H, np.array([1.0, 1.0, 0.0, 0.0]), None, None)
    _, alpha = attend(Tensor(rng.normal(size=2)), enc, None, p)
    assert alpha.data[2:].max() < 1e-9
    assert alpha.data.sum() == pytest.approx(1.0, abs=1e-6)


def test_attend_all_masked_is_contract_error():
    p = AttentionParams(2, 4, rng=np.random.default_rng(0))
    enc = blocks.EncoderStates(Tensor(np.zeros((2, 4))), np.zeros(2), None, None)
    with pytest.raises(ContractError):
        attend(Tensor(np.zeros(2)), enc, None, p)


def test_coverage_only_with_additive():
    p = AttentionParams(2, 4, mode="bilinear", rng=np.random.default_rng(0))
    enc = blocks.EncoderStates(Tensor(np.zeros((2, 4))), np.ones(2), None, None)
    with pytest.raises(ContractError):
        attend(Tensor(np.zeros(2)), enc, Tensor(np.zeros(2)), p)


# --- temporal attention -----------------------------------------------------


def test_temporal_first_step_is_softmax():
    e = Tensor(np.array([0.2, -1.0, 0.5]))
    out = temporal_attend(e, [])
    ref = np.exp(e.data - e.data.max())
    np.testing.assert_allclose(out.data, ref / ref.sum(), atol=1e-12)


def test_temporal_uniform_history_cancels():
    e2 = Tensor(np.array([0.7, -0.3]))
    history = [Tensor(np.array([1.3, 1.3]))]
    out = temporal_attend(e2, history)
    ref = np.exp(e2.data)
    np.testing.assert_allclose(out.data, ref / ref.sum(), atol=1e-12)


def test_temporal_hand_damping():
    # history [ln 3, ln 1] damps by [3, 1] before renormalizing
    e2 = np.array([0.4, 0.9])
    out = temporal_attend(Tensor(e2), [Tensor(np.array([math.log(3.0), 0.0]))])
    damped = np.exp(e2) / np.array([3.0, 1.0])
    np.testing.assert_allclose(out.data, damped / damped.sum(), atol=1e-12)


# --- intra-decoder attention -------------------------------------------------


def test_intra_first_step_zeros():
    p = blocks.IntraAttentionParams(3, np.random.default_rng(0))
    out = intra_decoder_attend(Tensor(np.ones(3)), [], p)
    np.testing.assert_array_equal(out.data, np.zeros(3))


def test_intra_second_step_returns_first_state():
    p = blocks.IntraAttentionParams(3, np.random.default_rng(1))
    s1 = Tensor(np.array([0.3, -0.2, 0.9]))
    out = intra_decoder_attend(Tensor(np.ones(3)), [s1], p)
    np.testing.assert_allclose(out.data, s1.data, atol=1e-12)


def test_intra_third_step_hand_mixture():
    rng = np.random.default_rng(2)
    p = blocks.IntraAttentionParams(3, rng)
    s1 = np.array([0.3, -0.2, 0.9])
    s2 = np.array([-1.0, 0.4, 0.1])
    s_t = np.array([0.2, 0.2, -0.5])
    out = intra_decoder_attend(Tensor(s_t), [Tensor(s1), Tensor(s2)], p)
    scores = np.array([s1 @ (p.W_d.data @ s_t), s2 @ (p.W_d.data @ s_t)])
    w = np.exp(scores - scores.max())
    w = w / w.sum()
    np.testing.assert_allclose(out.data, w[0] * s1 + w[1] * s2, atol=1e-12)


# --- pointer-generator step ---------------------------------------------------


def run_step(rng, params, T_src=4, n_oov=2, **flags):
    d_emb = params.lstm.input_dim
    h = params.lstm.hidden_dim
    vocab = params.out.embedder.vocab_size
    H = Tensor(rng.normal(size=(T_src, 2 * h)))
    enc = blocks.EncoderStates(H, np.ones(T_src), None, None)
    state = DecoderState(
        Tensor(rng.normal(size=h)), Tensor(rng.normal(size=h)), Tensor(np.zeros(T_src))
    )
    # first two source tokens are in-vocab, the rest are per-example OOVs
    src_ext = np.array([2, 5, vocab, vocab + 1])[:T_src]
    x_t = Tensor(rng.normal(size=d_emb))
    return pointer_generator_step(x_t, state, enc, src_ext, n_oov, params, **flags)


def test_pointer_step_p_gen_one_is_pure_vocab():
    rng = np.random.default_rng(11)
    params = TinyDecoderParams(rng)
    params.pointer.b.data[...] = 50.0  # sigmoid saturates to exactly 1.0
    out = run_step(rng, params)
    assert out.p_gen.data[0] == 1.0
    vocab = params.out.embedder.vocab_size
    assert np.abs(out.p_final.data[vocab:]).max() == 0.0
    assert out.p_final.data.sum() == pytest.approx(1.0, abs=1e-9)


def test_pointer_step_p_gen_zero_is_pure_copy():
    rng = np.random.default_rng(12)
    params = TinyDecoderParams(rng)
    params.pointer.b.data[...] = -50.0
    out = run_step(rng, params)
    assert out.p_gen.data[0] < 1e-20
    vocab = params.out.embedder.vocab_size
    expected = np.zeros(vocab + 2)
    np.add.at(expected, np.array([2, 5, vocab, vocab + 1]), out.alpha.data)
    np.testing.assert_allclose(out.p_final.data, expected, atol=1e-9)


def test_pointer_step_half_mix_hand():
    rng = np.random.default_rng(13)
    params = TinyDecoderParams(rng)
    for k in ("w_c", "w_s", "w_x", "b"):
        getattr(params.pointer, k).data[...] = 0.0  # gate pre-activation 0 -> p_gen 0.5
    out = run_step(rng, params, T_src=2, n_oov=1)
    assert out.p_gen.data[0] == 0.5
    vocab = params.out.embedder.vocab_size
    # recompute the mixture by hand from the step's own pieces
    p_vocab = out.p_final.data[:vocab] * 0  # placeholder, rebuilt below
    copy = np.zeros(vocab + 1)
    np.add.at(copy, np.array([2, 5]), out.alpha.data)
    # P_vocab can be recovered from the vocab slots minus the copy share
    hand = 0.5 * np.concatenate([(out.p_final.data[:vocab] - 0.5 * copy[:vocab]) / 0.5, [0.0]]) + 0.5 * copy
    np.testing.assert_allclose(out.p_final.data, hand, atol=1e-12)
    assert out.p_final.data.sum() == pytest.approx(1.0, abs=1e-6)


def test_pointer_step_mass_split_with_disjoint_oov_source():
    rng = np.random.default_rng(14)
    params = TinyDecoderParams(rng)
    vocab = params.out.embedder.vocab_size
    H = Tensor(rng.normal(size=(3, 10)))
    enc = blocks.EncoderStates(H, np.ones(3), None, None)
    state = DecoderState(Tensor(rng.normal(size=5)), Tensor(rng.normal(size=5)), Tensor(np.zeros(3)))
    src_ext = np.array([vocab, vocab + 1, vocab + 2])  # every source token OOV
    out = pointer_generator_step(Tensor(rng.normal(size=4)), state, enc, src_ext, 3, params)
    p_gen = out.p_gen.data[0]
    assert out.p_final.data[:vocab].sum() == pytest.approx(p_gen, abs=1e-6)
    assert out.p_final.data[vocab:].sum() == pytest.approx(1.0 - p_gen, abs=1e-6)


def test_pointer_step_extended_id_out_of_range():
    rng = np.random.default_rng(15)
    params = TinyDecoderParams(rng)
    vocab = params.out.embedder.vocab_size
    H = Tensor(rng.normal(size=(2, 10)))
    enc = blocks.EncoderStates(H, np.ones(2), None, None)
    state = DecoderState(Tensor(np.zeros(5)), Tensor(np.zeros(5)), Tensor(np.zeros(2)))
    with pytest.raises(ContractError):
        pointer_generator_step(Tensor(np.zeros(4)), state, enc, np.array([vocab + 1, 0]), 1, params)


def test_pointer_step_coverage_recurrence():
    rng = np.random.default_rng(16)
    params = TinyDecoderParams(rng)
    vocab = params.out.embedder.vocab_size
    H = Tensor(rng.normal(size=(3, 10)))
    enc = blocks.EncoderStates(H, np.ones(3), None, None)
    state = DecoderState(Tensor(rng.normal(size=5)), Tensor(rng.normal(size=5)), Tensor(np.zeros(3)))
    src_ext = np.array([2, 3, 4])
    alphas = []
    for _ in range(4):
        np.testing.assert_allclose(
            state.coverage.data, sum(a.data for a in alphas) if alphas else np.zeros(3), atol=1e-12
        )
        out = pointer_generator_step(Tensor(rng.normal(size=4)), state, enc, src_ext, 0, params, coverage=True)
        alphas.append(out.alpha)
        state = out.state
    assert len(state.attn_history) == 4


# --- losses -------------------------------------------------------------------


def test_coverage_loss_first_step_zero():
    alpha = Tensor(np.array([0.6, 0.4]))
    cov = Tensor(np.zeros(2))
    assert coverage_loss([alpha], [cov]).item() == 0.0


def test_coverage_loss_revisit_counts_one():
    onehot = Tensor(np.array([1.0, 0.0]))
    covs = [Tensor(np.zeros(2)), Tensor(np.array([1.0, 0.0]))]
    loss = coverage_loss([onehot, onehot], covs)
    # second step contributes min(1,1)=1; mean over 2 steps
    assert loss.item() == pytest.approx(0.5)


def test_coverage_loss_disjoint_zero():
    a1 = Tensor(np.array([1.0, 0.0]))
    a2 = Tensor(np.array([0.0, 1.0]))
    covs = [Tensor(np.zeros(2)), Tensor(a1.data)]
    assert coverage_loss([a1, a2], covs).item() == 0.0


def test_nll_perfect_prediction_zero():
    p = Tensor(np.array([0.0, 1.0, 0.0]))
    assert nll_loss([p], [1]).item() == pytest.approx(0.0, abs=1e-9)


def test_nll_uniform_is_log_k():
    k = 5
    p = Tensor(np.full(k, 1.0 / k))
    assert nll_loss([p], [3]).item() == pytest.approx(math.log(k), abs=1e-12)


def test_nll_three_step_hand_sum():
    ps = [
        Tensor(np.array([0.7, 0.2, 0.1])),
        Tensor(np.array([0.1, 0.8, 0.1])),
        Tensor(np.array([0.3, 0.3, 0.4])),
    ]
    targets = [0, 1, 2]
    expected = -(math.log(0.7) + math.log(0.8) + math.log(0.4)) / 3.0
    assert nll_loss(ps, targets).item() == pytest.approx(expected, abs=1e-12)


def test_nll_mask_skips_steps():
    ps = [Tensor(np.array([0.5, 0.5])), Tensor(np.array([0.9, 0.1]))]
    loss = nll_loss(ps, [0, 0], mask=[1, 0])
    assert loss.item() == pytest.approx(math.log(2.0), abs=1e-12)


def test_nll_target_out_of_range():
    with pytest.raises(ContractError):
        nll_loss([Tensor(np.array([1.0]))], [4])


# --- end-to-end gradient ------------------------------------------------------


def rollout_loss(params, enc_params, reduce_params, emb, src_ids, src_ext, tgt, n_oov, coverage):
    embedded = embed(emb, src_ids)
    enc = bilstm_encode(embedded, np.ones(len(src_ids)), enc_params)
    state = init_decoder_state(enc, reduce_params)
    prev = [2] + list(tgt[:-1])  # teacher forcing from bos
    p_finals, alphas, covs = [], [], []
    for t, token in enumerate(prev):
        x_t = T.reshape(embed(emb, [min(token, emb.vocab_size - 1)]), (emb.dim,))
        covs.append(state.coverage)
        out = pointer_generator_step(x_t, state, enc, src_ext, n_oov, params, coverage=coverage)
        p_finals.append(out.p_final)
        alphas.append(out.alpha)
        state = out.state
    loss = nll_loss(p_finals, tgt)
    if coverage:
        loss = T.add(loss, coverage_loss(alphas, covs))
    return loss


def test_grad_check_full_pointer_generator_step_with_coverage():
    rng = np.random.default_rng(17)
    d_emb, h, vocab = 3, 4, 7
    emb = Embedder(blocks.uniform_param(rng, (vocab, d_emb)), shared=True)

    class P:
        lstm = LSTMCellParams(d_emb, h, rng)
        attn = AttentionParams(h, 2 * h, rng=rng)
        pointer = PointerParams(2 * h, h, d_emb, rng)
        out = OutputParams(emb, 3 * h, rng)

    enc_params = BiLSTMParams(d_emb, h, rng)
    reduce_params = ReduceStateParams(h, rng)
    src_ids = [4, 1, 5]
    src_ext = [4, vocab, 5]
    tgt = [4, vocab, 3]

    names = {}
    names.update(emb.named("emb"))
    names.update(P.lstm.named("lstm"))
    names.update(P.attn.named("attn"))
    names.update(P.pointer.named("ptr"))
    names.update(P.out.named("out"))
    names.update(enc_params.named("enc"))
    names.update(reduce_params.named("red"))
    tensors = list(names.values())

    def f(*ts):
        return rollout_loss(P, enc_params, reduce_params, emb, src_ids, src_ext, tgt, 1, True)

    # eps balances truncation against float64 subtraction noise on the
    # coordinates whose true gradient is tiny (deep-gate LSTM paths)
    assert grad_check(f, tensors, eps=5e-4) < 1e-4
