"""Beam-search decoding with attention and generation-gate traces.

Search starts from bos, expands every live hypothesis with every
extended-vocabulary continuation, keeps the top-B by cumulative
log-probability, retires eos-terminated hypotheses, and stops once B are
finished or max_len is reached. Final ranking is by length-normalized
log-probability; exact ties prefer the lexicographically smaller token
sequence, making results deterministic.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import data
from .tensor import ContractError


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple  # emitted extended ids; includes the trailing eos when finished
    log_prob: float
    state: object
    attention: tuple  # one source-length row per emitted token
    p_gens: tuple
    finished: bool = False

    @property
    def score(self):
        """Length-normalized cumulative log-probability."""
        return self.log_prob / max(len(self.tokens), 1)


def beam_search(view, src_ids, src_mask, src_ext_ids, n_oov, beam=4, max_len=30):
    """Decode one source sequence; returns up to ``beam`` hypotheses, best first.

    ``view`` is a model (or task view) exposing encode / initial_state /
    step. Zero-probability continuations are never expanded, so a
    distribution concentrated on eos yields a single finished hypothesis.
    """
    if beam < 1:
        raise ContractError("beam must be >= 1")
    if max_len < 1:
        raise ContractError("max_len must be >= 1")
    enc = view.encode(src_ids, src_mask)
    live = [Hypothesis((), 0.0, view.initial_state(enc), (), ())]
    finished = []

    for _ in range(max_len):
        candidates = []
        for hyp in live:
            prev = hyp.tokens[-1] if hyp.tokens else data.BOS_ID
            out = view.step(prev, hyp.state, enc, src_ext_ids, n_oov)
            p = out.p_final.data
            with np.errstate(divide="ignore"):
                log_p = np.log(p)
            alpha = out.alpha.data.copy()
            p_gen = float(out.p_gen.data.reshape(-1)[0])
            for token in range(p.shape[0]):
                if p[token] <= 0.0:
                    continue
                candidates.append(
                    Hypothesis(
                        hyp.tokens + (token,),
                        hyp.log_prob + float(log_p[token]),
                        out.state,
                        hyp.attention + (alpha,),
                        hyp.p_gens + (p_gen,),
                    )
                )
        if not candidates:
            break
        candidates.sort(key=lambda h: (-h.log_prob, h.tokens))
        live = []
        for hyp in candidates[:beam]:
            if hyp.tokens[-1] == data.EOS_ID:
                finished.append(replace(hyp, finished=True))
            else:
                live.append(hyp)
        if len(finished) >= beam or not live:
            break

    pool = finished if len(finished) >= beam else finished + live
    pool.sort(key=lambda h: (-h.score, h.tokens))
    return pool[:beam]


def trace_for_ui(hypothesis, source_tokens, vocab, oov_tokens):
    """JSON-ready generation record for the editor front end.

    Resolves extended ids to surface words (a trailing eos is dropped) and
    aligns each output token with its attention row over the source tokens
    and its p_gen value.
    """
    tokens = list(hypothesis.tokens)
    if len(hypothesis.attention) != len(tokens) or len(hypothesis.p_gens) != len(tokens):
        raise ContractError(
            f"trace length mismatch: {len(tokens)} tokens, "
            f"{len(hypothesis.attention)} attention rows, {len(hypothesis.p_gens)} gates"
        )
    if tokens and tokens[-1] == data.EOS_ID:
        tokens = tokens[:-1]
    words = data.decode_extended(tokens, vocab, oov_tokens)
    n_src = len(source_tokens)
    return {
        "tokens": words,
        "text": " ".join(words),
        "attention": [[float(x) for x in row[:n_src]] for row in hypothesis.attention[: len(tokens)]],
        "p_gen": [float(x) for x in hypothesis.p_gens[: len(tokens)]],
        "score": hypothesis.score,
    }
