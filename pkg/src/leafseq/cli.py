"""Command-line entry points: serve, train, eval, decode, preprocess, params.

Every subcommand is a thin adapter from flags to the library modules; the
heavy lifting (training loops, decoding, the HTTP app) lives there.
"""

import argparse
import json
import logging
import sys

import numpy as np

from . import engine
from .beam import beam_search, trace_for_ui
from .data import Vocabulary, build_vocab, encode_with_oov, import_corpus, tokenize
from .models import ModelConfig, build_multitask, build_pointer_generator, count_params
from .rouge import format_report
from .synthetic import pairs_from_documents
from .tensor import ContractError

logger = logging.getLogger(__name__)

MODEL_KINDS = ("pointer_generator", "multitask")


def load_model_spec(path, default_vocab_size=None):
    """Read a model architecture file: ModelConfig fields plus "kind"."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ContractError(f"{path}: model config must be a JSON object")
    kind = raw.pop("kind", "pointer_generator")
    if kind not in MODEL_KINDS:
        raise ContractError(f"{path}: unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    if "tasks" in raw:
        raw["tasks"] = tuple(raw["tasks"])
    if default_vocab_size is not None:
        raw.setdefault("vocab_size", default_vocab_size)
    try:
        config = ModelConfig(**raw)
    except TypeError as exc:
        raise ContractError(f"{path}: {exc}") from exc
    return kind, config


def build_model(kind, config):
    return build_multitask(config) if kind == "multitask" else build_pointer_generator(config)


def _load_pairs(path, corpus_format, target):
    documents, skipped = import_corpus(path, corpus_format)
    pairs = pairs_from_documents(documents, target)
    if not pairs:
        raise ContractError(f"{path}: no usable ({target}) pairs")
    return pairs, skipped


def cmd_serve(args):
    import uvicorn

    from .service import app_from_config

    app = app_from_config(args.config)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def cmd_train(args):
    vocab = Vocabulary.load(args.vocab)
    pairs, _ = _load_pairs(args.data, args.format, args.target)
    val_pairs = None
    if args.val:
        val_pairs, _ = _load_pairs(args.val, args.format, args.target)
    kind, config = load_model_spec(args.model_config, default_vocab_size=len(vocab))
    if config.vocab_size != len(vocab):
        raise ContractError(
            f"{args.model_config}: vocab_size {config.vocab_size} does not match "
            f"{args.vocab} ({len(vocab)} tokens incl. 4 special); omit vocab_size "
            "from the config to derive it"
        )
    model = build_model(kind, config)
    plan = engine.TrainPlan(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        clip_norm=args.clip_norm,
        n_best=args.n_best,
        seed=args.seed,
        max_steps=args.max_steps,
    )
    result = engine.train(
        model,
        pairs,
        vocab,
        plan,
        checkpoint_dir=args.checkpoint_dir,
        val_pairs=val_pairs,
        resume_from=args.resume,
        task=args.task,
    )
    print(f"trained {result.step} steps on {len(pairs)} pairs")
    if result.losses:
        print(f"final loss {result.losses[-1]:.6f}")
    for entry in result.checkpoints:
        print(f"kept {entry['path']} val_nll {entry['score']:.6f}")
    if result.final_path:
        print(f"saved {result.final_path}")
    return 0


def cmd_eval(args):
    model, _ = engine.load_model(args.checkpoint)
    vocab = Vocabulary.load(args.vocab)
    pairs, _ = _load_pairs(args.data, args.format, args.target)
    if args.limit:
        pairs = pairs[: args.limit]
    view = model.view(args.task)
    records, report = engine.test_generate(
        view, pairs, vocab, beam=args.beam, max_len=args.max_len
    )
    print(f"evaluated {len(records)} pairs")
    print(format_report(report))
    return 0


def cmd_decode(args):
    model, _ = engine.load_model(args.checkpoint)
    vocab = Vocabulary.load(args.vocab)
    view = model.view(args.task)
    src_tokens = tokenize(args.text)
    if not src_tokens:
        raise ContractError("decode: text produced no tokens")
    ids, ext_ids, oov = encode_with_oov(src_tokens, vocab)
    hypotheses = beam_search(
        view, ids, np.ones(len(ids)), ext_ids, len(oov), beam=args.beam, max_len=args.max_len
    )
    trace = trace_for_ui(hypotheses[0], src_tokens, vocab, oov)
    if args.json:
        print(json.dumps({"src_tokens": src_tokens, **trace}))
    else:
        print(trace["text"])
    return 0


def cmd_preprocess(args):
    documents, skipped = import_corpus(args.input, args.format)
    vocab = build_vocab(documents, args.max_vocab)
    vocab.save(args.vocab_out)
    print(f"documents {len(documents)}")
    print(f"skipped {skipped}")
    print(f"vocab {len(vocab)} ({len(vocab) - 4} listed + 4 special)")
    print(f"saved {args.vocab_out}")
    return 0


def cmd_params(args):
    if args.checkpoint:
        model, _ = engine.load_model(args.checkpoint)
    else:
        kind, config = load_model_spec(args.model_config)
        model = build_model(kind, config)
    counts = count_params(model)
    for module in sorted(counts["by_module"]):
        print(f"{module} {counts['by_module'][module]}")
    print(f"total {counts['total']}")
    if args.budget is not None:
        if counts["total"] < args.budget:
            print(f"budget {args.budget} ok")
        else:
            print(f"budget {args.budget} exceeded")
            return 1
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="leafseq",
        description="Abstractive summarization toolkit: train, decode, evaluate, serve.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the HTTP generation service")
    serve.add_argument("--config", required=True, help="service config JSON path")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--host", default="127.0.0.1")
    serve.set_defaults(fn=cmd_serve)

    def add_corpus_flags(p):
        p.add_argument("--format", choices=("jsonl", "tsv"), default="jsonl")
        p.add_argument("--target", choices=("summary", "title"), default="summary",
                       help="which reference field to learn or score against")

    train = sub.add_parser("train", help="train a model on a corpus")
    train.add_argument("--data", required=True)
    train.add_argument("--val")
    train.add_argument("--vocab", required=True)
    train.add_argument("--model-config", required=True, help="architecture JSON path")
    train.add_argument("--checkpoint-dir")
    train.add_argument("--resume")
    train.add_argument("--task", help="task branch for multi-task models")
    train.add_argument("--epochs", type=int, default=1)
    train.add_argument("--batch-size", type=int, default=4)
    train.add_argument("--learning-rate", type=float, default=1e-3)
    train.add_argument("--clip-norm", type=float, default=2.0)
    train.add_argument("--n-best", type=int, default=3)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--max-steps", type=int)
    add_corpus_flags(train)
    train.set_defaults(fn=cmd_train)

    evaluate = sub.add_parser("eval", help="decode a test set and report ROUGE")
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--vocab", required=True)
    evaluate.add_argument("--data", required=True)
    evaluate.add_argument("--task")
    evaluate.add_argument("--beam", type=int, default=4)
    evaluate.add_argument("--max-len", type=int, default=30)
    evaluate.add_argument("--limit", type=int)
    add_corpus_flags(evaluate)
    evaluate.set_defaults(fn=cmd_eval)

    decode = sub.add_parser("decode", help="generate for one input text")
    decode.add_argument("--checkpoint", required=True)
    decode.add_argument("--vocab", required=True)
    decode.add_argument("--text", required=True)
    decode.add_argument("--task")
    decode.add_argument("--beam", type=int, default=4)
    decode.add_argument("--max-len", type=int, default=30)
    decode.add_argument("--json", action="store_true", help="print the full trace as JSON")
    decode.set_defaults(fn=cmd_decode)

    preprocess = sub.add_parser("preprocess", help="build a vocabulary from a corpus")
    preprocess.add_argument("--input", required=True)
    preprocess.add_argument("--format", choices=("jsonl", "tsv"), default="jsonl")
    preprocess.add_argument("--vocab-out", required=True)
    preprocess.add_argument("--max-vocab", type=int, default=50000)
    preprocess.set_defaults(fn=cmd_preprocess)

    params = sub.add_parser("params", help="count model parameters by module")
    group = params.add_mutually_exclusive_group(required=True)
    group.add_argument("--model-config", help="architecture JSON path")
    group.add_argument("--checkpoint")
    params.add_argument("--budget", type=int, help="fail (exit 1) if total >= budget")
    params.set_defaults(fn=cmd_params)

    return parser


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ContractError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
