"""ROUGE-1/2/L overlap metrics with mean-F1 corpus aggregation."""

from collections import Counter
from dataclasses import dataclass

from .tensor import ContractError


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float


def _score(overlap, n_cand, n_ref):
    p = overlap / n_cand if n_cand else 0.0
    r = overlap / n_ref if n_ref else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return RougeScore(p, r, f1)


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate, reference, n):
    """Clipped n-gram overlap: recall over reference grams, precision over candidate grams."""
    if n < 1:
        raise ContractError("rouge_n: n must be >= 1")
    cand = _ngrams(list(candidate), n)
    ref = _ngrams(list(reference), n)
    overlap = sum(min(count, ref[gram]) for gram, count in cand.items())
    return _score(overlap, sum(cand.values()), sum(ref.values()))


def _lcs_length(a, b):
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate, reference):
    """Longest-common-subsequence overlap with harmonic F1."""
    cand, ref = list(candidate), list(reference)
    lcs = _lcs_length(cand, ref) if cand and ref else 0
    return _score(lcs, len(cand), len(ref))


def corpus_rouge(pairs):
    """Mean per-pair F1 of ROUGE-1/2/L, reported x100 to two decimals.

    ``pairs`` holds (candidate tokens, reference tokens) tuples. Returns
    {"R1": ..., "R2": ..., "RL": ...}.
    """
    pairs = list(pairs)
    if not pairs:
        raise ContractError("corpus_rouge: empty pair list")
    sums = {"R1": 0.0, "R2": 0.0, "RL": 0.0}
    for cand, ref in pairs:
        sums["R1"] += rouge_n(cand, ref, 1).f1
        sums["R2"] += rouge_n(cand, ref, 2).f1
        sums["RL"] += rouge_l(cand, ref).f1
    return {key: round(100.0 * total / len(pairs), 2) for key, total in sums.items()}


def format_report(scores):
    """Machine-readable one-line report."""
    return f"R1={scores['R1']:.2f} R2={scores['R2']:.2f} RL={scores['RL']:.2f}"
