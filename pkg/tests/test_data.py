import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from leafseq import synthetic
from leafseq.data import (
    BOS_ID,
    EOS_ID,
    PAD_ID,
    UNK_ID,
    Document,
    Vocabulary,
    build_vocab,
    decode_extended,
    encode_target,
    encode_with_oov,
    import_corpus,
    make_batches,
    tokenize,
)
from leafseq.tensor import ContractError


# --- tokenize ----------------------------------------------------------------


def test_tokenize_punctuation_and_case():
    assert tokenize("Hello, world!") == ["hello", ",", "world", "!"]


def test_tokenize_empty():
    assert tokenize("") == []


def test_tokenize_repeats():
    assert tokenize("a a a") == ["a", "a", "a"]


def test_tokenize_all_split_marks():
    assert tokenize('a.b,c!d?e;f:g"h(i)j') == [
        "a", ".", "b", ",", "c", "!", "d", "?", "e", ";", "f", ":", "g", '"', "h", "(", "i", ")", "j",
    ]


@given(st.text(max_size=80))
def test_tokenize_stable_under_rejoin(text):
    tokens = tokenize(text)
    assert tokenize(" ".join(tokens)) == tokens


# --- vocabulary ---------------------------------------------------------------


def corpus(*sentences):
    return [Document(tokenize(s), summary=["x"]) for s in sentences]


def test_build_vocab_frequency_order():
    vocab = build_vocab([Document(["a", "a", "b"], summary=None, title=["t"])], 8)
    assert vocab.id_for("a") == 4
    assert vocab.id_for("b") == 5


def test_build_vocab_cap_keeps_top():
    vocab = build_vocab([Document(["a", "a", "b"])], 5)
    assert "a" in vocab and "b" not in vocab
    assert len(vocab) == 5


def test_build_vocab_deterministic():
    docs = [Document(tokenize("c b a b c c"))]
    v1, v2 = build_vocab(docs, 10), build_vocab(docs, 10)
    assert [v1.token_for(i) for i in range(len(v1))] == [v2.token_for(i) for i in range(len(v2))]


def test_build_vocab_ties_lexicographic():
    vocab = build_vocab([Document(["pear", "apple"])], 5)
    assert "apple" in vocab and "pear" not in vocab


def test_build_vocab_empty_corpus():
    with pytest.raises(ContractError):
        build_vocab([], 10)


def test_build_vocab_max_size_too_small():
    with pytest.raises(ContractError):
        build_vocab([Document(["a"])], 4)


def test_vocab_specials_fixed():
    vocab = Vocabulary(["a"])
    assert (PAD_ID, UNK_ID, BOS_ID, EOS_ID) == (0, 1, 2, 3)
    assert vocab.token_for(0) == "<pad>"
    assert vocab.id_for("never-seen") == UNK_ID


def test_vocab_token_for_out_of_range():
    with pytest.raises(ContractError):
        Vocabulary(["a"]).token_for(9)


def test_vocab_save_load_round_trip(tmp_path):
    vocab = build_vocab([Document(tokenize("b b a c c c"))], 10)
    path = tmp_path / "vocab.txt"
    vocab.save(path)
    loaded = Vocabulary.load(path)
    assert len(loaded) == len(vocab)
    assert [loaded.token_for(i) for i in range(len(loaded))] == [
        vocab.token_for(i) for i in range(len(vocab))
    ]
    assert loaded.counts == vocab.counts
    assert path.read_text().splitlines()[0] == "c 3"


# --- oov extension -------------------------------------------------------------


def test_encode_no_oov():
    vocab = Vocabulary(["the", "cat"])
    ids, ext, oov = encode_with_oov(["the", "cat"], vocab)
    assert ids == ext == [4, 5]
    assert oov == []


def test_encode_repeated_oov_shares_slot():
    vocab = Vocabulary(["the"])
    ids, ext, oov = encode_with_oov(["the", "florp", "the", "florp"], vocab)
    assert ids == [4, UNK_ID, 4, UNK_ID]
    assert ext == [4, len(vocab), 4, len(vocab)]
    assert oov == ["florp"]


def test_encode_two_oovs_first_occurrence_order():
    vocab = Vocabulary(["a"])
    _, ext, oov = encode_with_oov(["zz", "a", "yy"], vocab)
    assert ext == [len(vocab), 4, len(vocab) + 1]
    assert oov == ["zz", "yy"]


def test_encode_target_uses_source_slots():
    vocab = Vocabulary(["said"])
    ids, ext = encode_target(["florp", "said", "blurg"], vocab, ["florp"])
    assert ids == [UNK_ID, 4, UNK_ID]
    assert ext == [len(vocab), 4, UNK_ID]  # blurg is not copyable


def test_decode_round_trip():
    vocab = Vocabulary(["the", "cat"])
    tokens = ["the", "florp", "cat", "blurg", "florp"]
    _, ext, oov = encode_with_oov(tokens, vocab)
    assert decode_extended(ext, vocab, oov) == tokens


def test_decode_unresolvable_id():
    vocab = Vocabulary(["a"])
    with pytest.raises(ContractError):
        decode_extended([len(vocab) + 1], vocab, ["one-slot"])


@given(st.lists(st.sampled_from(["the", "cat", "zorp", "qux", "blee"]), max_size=12))
def test_extended_ids_stay_in_declared_range(tokens):
    vocab = Vocabulary(["the", "cat"])
    _, ext, oov = encode_with_oov(tokens, vocab)
    assert all(e < len(vocab) + len(oov) for e in ext)
    assert decode_extended(ext, vocab, oov) == tokens


# --- batching ------------------------------------------------------------------


def small_pairs():
    return [
        (["the", "cat", "sat"], ["cat"]),
        (["a", "dog", "ran", "far"], ["dog", "ran"]),
        (["the", "bird"], ["bird"]),
    ]


def small_vocab():
    return Vocabulary(["the", "cat", "sat", "a", "dog", "ran", "far", "bird"])


def test_batch_sizes_partition():
    batches = make_batches(small_pairs(), small_vocab(), batch_size=2)
    assert [b.size for b in batches] == [2, 1]


def test_batch_no_padding_when_equal_lengths():
    pairs = [(["a", "b"], ["a"]), (["c", "d"], ["b"])]
    batch = make_batches(pairs, Vocabulary(["a", "b", "c", "d"]), batch_size=2)[0]
    assert batch.src_mask.all()
    assert batch.tgt_mask.all()


def test_batch_truncates_source():
    pairs = [(list("abcdefg"), ["a"])]
    vocab = Vocabulary(list("abcdefg"))
    batch = make_batches(pairs, vocab, batch_size=1, max_src_len=5)[0]
    assert batch.src.shape[1] == 5
    assert [vocab.token_for(i) for i in batch.src[0]] == list("abcde")


def test_batch_target_framing():
    vocab = small_vocab()
    batch = make_batches([(["the", "cat"], ["cat", "sat"])], vocab, batch_size=1)[0]
    assert batch.tgt_in[0].tolist() == [BOS_ID, vocab.id_for("cat"), vocab.id_for("sat")]
    assert batch.tgt_out[0].tolist() == [vocab.id_for("cat"), vocab.id_for("sat"), EOS_ID]


def test_batch_oov_flow_source_to_target():
    vocab = Vocabulary(["said"])
    batch = make_batches([(["florp", "said"], ["florp"])], vocab, batch_size=1)[0]
    assert batch.src[0].tolist() == [UNK_ID, 4]
    assert batch.src_ext[0].tolist() == [len(vocab), 4]
    assert batch.tgt_out[0].tolist() == [len(vocab), EOS_ID]
    assert batch.oovs[0] == ["florp"]


def test_batch_padding_and_masks():
    batch = make_batches(small_pairs(), small_vocab(), batch_size=2)[0]
    lengths = batch.src_mask.sum(axis=1)
    assert sorted(lengths.tolist()) == [3.0, 4.0]
    padded_row = int(np.argmin(lengths))
    assert batch.src[padded_row, -1] == PAD_ID


def test_batch_shuffle_deterministic():
    a = make_batches(small_pairs(), small_vocab(), batch_size=1, seed=7)
    b = make_batches(small_pairs(), small_vocab(), batch_size=1, seed=7)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.src, y.src)
        np.testing.assert_array_equal(x.tgt_out, y.tgt_out)


def test_batch_partition_under_shuffle():
    pairs = [([w], [w]) for w in ["a", "b", "c", "d", "e"]]
    vocab = Vocabulary(["a", "b", "c", "d", "e"])
    batches = make_batches(pairs, vocab, batch_size=2, seed=3)
    seen = sorted(vocab.token_for(b.src[r, 0]) for b in batches for r in range(b.size))
    assert seen == ["a", "b", "c", "d", "e"]


def test_batch_empty_dataset():
    with pytest.raises(ContractError):
        make_batches([], small_vocab(), batch_size=2)


def test_batch_bad_batch_size():
    with pytest.raises(ContractError):
        make_batches(small_pairs(), small_vocab(), batch_size=0)


# --- corpus import ---------------------------------------------------------------


def test_import_jsonl(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text('{"text": "a b", "summary": "a"}\n')
    docs, skipped = import_corpus(path, "jsonl")
    assert skipped == 0
    assert docs[0].text == ["a", "b"]
    assert docs[0].summary == ["a"]
    assert docs[0].title is None


def test_import_skips_record_missing_targets(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text('{"text": "a b"}\n{"text": "c", "title": "t"}\n')
    docs, skipped = import_corpus(path, "jsonl")
    assert skipped == 1
    assert len(docs) == 1
    assert docs[0].title == ["t"]


def test_import_skips_unparsable_and_nonstring(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text('not json\n{"text": 5, "summary": "a"}\n{"text": "ok", "summary": "s"}\n')
    docs, skipped = import_corpus(path, "jsonl")
    assert skipped == 2
    assert len(docs) == 1


def test_import_empty_file(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text("")
    assert import_corpus(path, "jsonl") == ([], 0)


def test_import_tsv(tmp_path):
    path = tmp_path / "corpus.tsv"
    path.write_text("a b\tshort one\t\nc d\t\tThe Title\n")
    docs, skipped = import_corpus(path, "tsv")
    assert skipped == 0
    assert docs[0].summary == ["short", "one"] and docs[0].title is None
    assert docs[1].summary is None and docs[1].title == ["the", "title"]


def test_import_unknown_format(tmp_path):
    with pytest.raises(ContractError):
        import_corpus(tmp_path / "x", "xml")


def test_import_missing_file(tmp_path):
    with pytest.raises(OSError):
        import_corpus(tmp_path / "absent.jsonl", "jsonl")


# --- synthetic corpora -------------------------------------------------------------


def test_overfit_pairs_distinct_and_deterministic():
    a = synthetic.make_overfit_pairs(20, seed=1)
    b = synthetic.make_overfit_pairs(20, seed=1)
    assert a == b
    assert len({tuple(src) for src, _ in a}) == 20
    vocab = synthetic.vocab_from_pairs(a, max_size=200)
    assert len(vocab) <= 200
    for src, tgt in a:
        assert tgt == [src[2], src[4], src[6]]
        assert all(tok in vocab for tok in src + tgt)


def test_copy_corpus_names_are_oov():
    pairs, vocab = synthetic.make_copy_corpus(12, seed=2)
    for src, tgt in pairs:
        src_oov = [t for t in src if t not in vocab]
        tgt_oov = [t for t in tgt if t not in vocab]
        assert len(src_oov) == 2  # one NAME and one CODE per example
        assert set(tgt_oov) == set(src_oov)
        assert len(tgt_oov) == 2


def test_copy_corpus_names_unique_across_examples():
    pairs, vocab = synthetic.make_copy_corpus(10, seed=3)
    fills = [t for src, _ in pairs for t in src if t not in vocab]
    assert len(fills) == len(set(fills))


def test_two_task_documents_have_both_fields():
    docs = synthetic.make_two_task_documents(8, seed=4)
    assert len(docs) == 8
    for doc in docs:
        assert doc.summary and doc.title
        assert doc.title == doc.summary[:len(doc.title)]
    summaries = synthetic.pairs_from_documents(docs, "summary")
    titles = synthetic.pairs_from_documents(docs, "title")
    assert len(summaries) == len(titles) == 8
