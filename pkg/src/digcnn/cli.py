"""Command-line entry points: ``digcnn train | parse | eval | inspect``."""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from typing import Optional, Sequence

from .autodiff import INFER
from .corpus import Vocabulary, read_conll, write_conll
from .decode import ParseTree, eisner_decode, greedy_decode, reduce_to_arc_scores
from .errors import CheckpointError, ConfigError, ContractViolation, DataError, DivergenceError
from .evaluate import evaluate
from .model import ModelConfig, forward, parameter_count
from .train import TrainConfig, load_checkpoint, save_checkpoint, train

EXIT_OK, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3

logger = logging.getLogger("digcnn")


def _coerce(raw: str, default):
    if raw.lower() in ("none", "null", ""):
        return None
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float) or default is None:
        try:
            return float(raw)
        except ValueError:
            return raw
    return raw


def read_config(path):
    """Parse ``key = value`` lines into (ModelConfig kwargs, TrainConfig kwargs)."""
    model_fields = {f.name: f.default for f in fields(ModelConfig)}
    train_fields = {f.name: f.default for f in fields(TrainConfig)}
    model_kw, train_kw = {}, {}
    try:
        handle = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from None
    with handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            try:
                if key in model_fields:
                    model_kw[key] = _coerce(value, model_fields[key])
                elif key in train_fields:
                    train_kw[key] = _coerce(value, train_fields[key])
                else:
                    raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            except ValueError as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return model_kw, train_kw


def cmd_train(args) -> int:
    model_kw, train_kw = read_config(args.config) if args.config else ({}, {})
    if args.seed is not None:
        train_kw["seed"] = args.seed
    vocab = Vocabulary(min_count=args.min_count)
    train_set = read_conll(args.train, vocab, mode="train")
    if not train_set:
        raise DataError(f"{args.train}: no sentences")
    dev_set = read_conll(args.dev, vocab, mode="parse") if args.dev else []
    dev_set = [s for s in dev_set if s.gold_heads is not None]
    model_kw.pop("num_labels", None)
    config = ModelConfig(num_labels=max(vocab.n_labels, 1), **model_kw)
    ckpt, log = train(train_set, dev_set, config, TrainConfig(**train_kw), vocab)
    save_checkpoint(ckpt, args.out)
    log_path = args.log or f"{args.out}.metrics.tsv"
    with open(log_path, "w", encoding="utf-8", newline="\n") as f:
        f.writelines(line + "\n" for line in log)
    print(f"checkpoint\t{args.out}")
    print(f"metrics\t{log_path}")
    return EXIT_OK


def cmd_parse(args) -> int:
    ckpt = load_checkpoint(args.model)
    sentences = read_conll(args.input, ckpt.vocab, mode="parse")

    def parse_one(s):
        scores = forward(s, ckpt.params, ckpt.config, INFER)[-1]
        if args.decoder == "eisner":
            return eisner_decode(reduce_to_arc_scores(scores), single_root=args.single_root)
        return greedy_decode(scores)

    if args.jobs > 1:
        with ThreadPoolExecutor(args.jobs) as pool:
            trees = list(pool.map(parse_one, sentences))
    else:
        trees = [parse_one(s) for s in sentences]
    write_conll(sentences, trees, args.output, ckpt.vocab.label_names())
    return EXIT_OK


def cmd_eval(args) -> int:
    vocab = Vocabulary()
    gold = read_conll(args.gold, vocab, mode="train")
    pred = read_conll(args.pred, vocab, mode="train")
    if len(gold) != len(pred):
        raise DataError(f"{len(gold)} gold sentences but {len(pred)} predicted")
    trees = []
    for k, (g, p) in enumerate(zip(gold, pred)):
        if g.n != p.n:
            raise DataError(f"sentence {k + 1}: {g.n - 1} gold tokens but {p.n - 1} predicted")
        trees.append(ParseTree(p.gold_heads, p.gold_labels))
    report = evaluate(gold, trees, args.convention, include_punct=args.include_punct)
    for line in report.lines():
        print(line)
    print(f"counted\t{report.counted_tokens}")
    print(f"total\t{report.total_tokens}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    ckpt = load_checkpoint(args.model)
    for key, value in ckpt.config.to_dict().items():
        print(f"config.{key}\t{value}")
    print(f"vocab.words\t{ckpt.vocab.n_words}")
    print(f"vocab.tags\t{ckpt.vocab.n_tags}")
    print(f"vocab.labels\t{ckpt.vocab.n_labels}")
    print(f"receptive_radius\t{ckpt.config.receptive_radius()}")
    print(f"parameters\t{ckpt.params.parameter_count()}")
    expected = parameter_count(ckpt.config, ckpt.vocab.n_words, ckpt.vocab.n_tags)
    if expected != ckpt.params.parameter_count():
        print(f"warning: expected {expected} parameters from the config", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="digcnn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a parser on a CoNLL treebank")
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--config", help="'key = value' file of model/training settings")
    p.add_argument("--seed", type=int)
    p.add_argument("--log", help="metrics log path (default: OUT.metrics.tsv)")
    p.add_argument("--min-count", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("parse", help="parse a CoNLL file with a trained checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--decoder", choices=("greedy", "eisner"), default="greedy")
    p.add_argument("--single-root", action="store_true", help="Eisner: exactly one root dependent")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("eval", help="attachment scores of a prediction file")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--include-punct", action="store_true")
    p.add_argument("--convention", choices=("ptb", "ud"), default="ud")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="describe a checkpoint")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, ConfigError, CheckpointError, ContractViolation, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
