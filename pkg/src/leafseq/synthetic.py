"""Templated desk-scale corpora for smoke training and oracles.

Three families: memorizable paraphrase pairs (small enough to overfit in
hundreds of steps), a copy corpus whose targets contain source-only OOV
names (exercising the pointer path end to end), and two-field documents
for multi-task and transfer runs. All generators are pure functions of
their seed.
"""

import numpy as np

from .data import Document, Vocabulary, build_vocab

NUMBER_WORDS = (
    "zero one two three four five six seven eight nine ten eleven twelve "
    "thirteen fourteen fifteen sixteen seventeen eighteen nineteen"
).split()

LETTER_WORDS = (
    "alpha bravo charlie delta echo foxtrot golf hotel india juliet kilo "
    "lima mike november oscar papa quebec romeo sierra tango uniform "
    "victor whiskey xray yankee zulu"
).split()


def make_overfit_pairs(n_pairs=20, seed=0):
    """Distinct memorizable (source, target) token pairs.

    Each source starts with a unique index word and lists five code words;
    the target repeats the first, third and fifth code words.
    """
    if n_pairs > len(NUMBER_WORDS):
        raise ValueError(f"at most {len(NUMBER_WORDS)} overfit pairs available")
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n_pairs):
        words = [LETTER_WORDS[j] for j in rng.choice(len(LETTER_WORDS), size=5, replace=False)]
        src = [NUMBER_WORDS[i], ":"] + words + ["."]
        tgt = [words[0], words[2], words[4]]
        pairs.append((src, tgt))
    return pairs


_COPY_TEMPLATES = (
    ("agent NAME filed report CODE at the north office .", "NAME filed CODE"),
    ("the parcel CODE was signed by courier NAME yesterday .", "NAME signed CODE"),
)

_CONSONANTS = "bcdfgklmnprstvz"
_VOWELS = "aeiou"


def _fresh_surface(rng, taken):
    """A pronounceable-ish token with digits, guaranteed out of vocabulary."""
    while True:
        name = (
            _CONSONANTS[rng.integers(len(_CONSONANTS))]
            + _VOWELS[rng.integers(len(_VOWELS))]
            + _CONSONANTS[rng.integers(len(_CONSONANTS))]
            + str(rng.integers(10, 100))
        )
        if name not in taken:
            taken.add(name)
            return name


def make_copy_corpus(n_pairs=30, seed=0, n_templates=2):
    """Copy-task corpus: (pairs, vocabulary).

    Every NAME/CODE slot is filled with a unique generated token that the
    returned vocabulary excludes, so targets can only produce them through
    the copy path.
    """
    if not 1 <= n_templates <= len(_COPY_TEMPLATES):
        raise ValueError(f"n_templates must be in [1, {len(_COPY_TEMPLATES)}]")
    rng = np.random.default_rng(seed)
    taken = set()
    pairs = []
    for i in range(n_pairs):
        src_tpl, tgt_tpl = _COPY_TEMPLATES[i % n_templates]
        fills = {"NAME": _fresh_surface(rng, taken), "CODE": _fresh_surface(rng, taken)}
        src = [fills.get(tok, tok) for tok in src_tpl.split()]
        tgt = [fills.get(tok, tok) for tok in tgt_tpl.split()]
        pairs.append((src, tgt))
    lexicon = sorted(
        {tok for src_tpl, tgt_tpl in _COPY_TEMPLATES for tok in (src_tpl + " " + tgt_tpl).split()}
        - {"NAME", "CODE"}
    )
    return pairs, Vocabulary(lexicon)


_SUBJECTS = ("the mayor", "a reporter", "the coach", "a pilot", "the chef", "a judge")
_VERBS = ("announced", "canceled", "opened", "praised", "reviewed", "visited")
_OBJECTS = ("the festival", "a new bridge", "the tournament", "a museum", "the harbor")
_PLACES = ("dover", "argo city", "port ellen", "north bay")
_DAYS = ("monday", "tuesday", "wednesday", "thursday", "friday")


def make_two_task_documents(n_docs=24, seed=0):
    """Documents carrying both a summary and a title over one lexicon.

    text: "<subject> <verb> <object> in <place> on <day> ."
    summary: "<subject> <verb> <object>"   title: "<subject> <verb>"
    """
    rng = np.random.default_rng(seed)
    docs = []
    for _ in range(n_docs):
        subject = _SUBJECTS[rng.integers(len(_SUBJECTS))]
        verb = _VERBS[rng.integers(len(_VERBS))]
        obj = _OBJECTS[rng.integers(len(_OBJECTS))]
        place = _PLACES[rng.integers(len(_PLACES))]
        day = _DAYS[rng.integers(len(_DAYS))]
        text = f"{subject} {verb} {obj} in {place} on {day} ."
        summary = f"{subject} {verb} {obj}"
        title = f"{subject} {verb}"
        docs.append(Document(text.split(), summary.split(), title.split()))
    return docs


def pairs_from_documents(documents, kind):
    """(source, target) pairs reading the given field of each document."""
    return [(doc.text, doc.target(kind)) for doc in documents if getattr(doc, kind) is not None]


def vocab_from_pairs(pairs, max_size=200):
    """Vocabulary over every token appearing in the given pairs."""
    docs = [Document(list(src), list(tgt)) for src, tgt in pairs]
    return build_vocab(docs, max_size)
