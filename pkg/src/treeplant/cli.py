"""``treeplant`` command line interface.

Results go to stdout as JSON (or JSONL/CSV files named by ``--out``);
human-readable tables and diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .loss import ConfigError
from .treebank import TreebankError, read_treebank, sniff_format
from .trainer import AXES, KINDS

log = logging.getLogger("treeplant")


class CLIError(Exception):
    pass


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CLIError(f"no such file: {path}")
    return p


def _read_trees(path: str) -> list:
    p = _existing(path)
    try:
        return read_treebank(p)
    except TreebankError as exc:
        line = getattr(exc, "line", None)
        if line is None:
            raise CLIError(f"{path}: {exc}") from exc
        raise CLIError(f"{path}:{line}: {exc.reason}") from exc


def _read_corpus(path: str) -> list[tuple[str, ...]]:
    """Sentences from a treebank file or from plain text (one sentence per line)."""
    p = _existing(path)
    text = p.read_text(encoding="utf-8")
    if p.suffix == ".conllu" or sniff_format(text) == "bracketed":
        return [t.words for t in _read_trees(path)]
    return [tuple(line.split()) for line in text.splitlines() if line.strip()]


def _parse_heads(spec: str | None):
    if spec is None:
        return None
    if not spec.strip():
        return ()
    try:
        return tuple(tuple(int(x) for x in part.split(":")) for part in spec.split(","))
    except ValueError:
        raise CLIError(f"--heads expects LAYER:HEAD[,LAYER:HEAD...], got {spec!r}") from None


def _config(args):
    from .trainer import TreePlantConfig

    base = TreePlantConfig.load(_existing(args.config)).to_dict() if args.config else {}
    base["kind"] = args.kind
    for flag, key in (("seed", "seed"), ("lam", "lam"), ("epochs", "epochs"), ("batch_size", "batch_size"),
                      ("lr", "lr"), ("max_steps", "max_steps")):
        value = getattr(args, flag, None)
        if value is not None:
            base[key] = value
    heads = _parse_heads(getattr(args, "heads", None))
    if heads is not None:
        base["heads"] = heads
    return TreePlantConfig.from_dict(base)


def cmd_preprocess(args) -> int:
    from .supervision import supervision_matrix, supervision_to_json
    from .trainer import sentence_distances
    from .treebank import augment_sentence

    trees = _read_trees(args.trees)
    distances = sentence_distances(trees, args.kind, seed=args.seed)
    with open(args.out, "w", encoding="utf-8") as fh:
        for tree, d in zip(trees, distances):
            words = tree.words if tree.augmented else augment_sentence(tree.words).words
            s = None if d is None else supervision_matrix(d)
            fh.write(supervision_to_json(words, d, s) + "\n")
    print(json.dumps({"sentences": len(trees), "kind": args.kind, "seed": args.seed, "out": args.out}))
    return 0


def cmd_train_vocab(args) -> int:
    from .tokenizer import train_vocab

    sentences = [w for path in args.trees for w in _read_corpus(path)]
    vocab = train_vocab(sentences, args.vocab_size)
    vocab.save(args.out)
    print(json.dumps({"size": len(vocab), "merges": len(vocab.merges), "hash": vocab.hash(), "out": args.out}))
    return 0


def cmd_train(args) -> int:
    from .model import save_checkpoint
    from .tokenizer import Vocabulary
    from .trainer import prepare_dataset, train

    config = _config(args)
    vocab = Vocabulary.load(_existing(args.vocab))
    trees = _read_trees(args.trees)
    dataset = prepare_dataset(trees, config.kind, vocab, seed=config.seed)
    result = train(config, dataset, vocab, log_path=args.log)
    save_checkpoint(args.out, result.model, vocab, result.selection, config.to_dict())
    last = result.history[-1]
    print(json.dumps({"steps": len(result.history), "final": last, "config_hash": config.hash(), "checkpoint": args.out}))
    return 0


def _suites(paths):
    from .evaluation import load_suite

    return [load_suite(_existing(p)) for p in paths or ()]


def cmd_evaluate(args) -> int:
    from .evaluation import TransformerScorer, evaluate
    from .model import load_checkpoint

    suites = _suites(args.suites)
    corpus = _read_corpus(args.corpus) if args.corpus else None
    if not suites and corpus is None:
        raise CLIError("evaluate needs --suites and/or --corpus")
    model, vocab, _, _ = load_checkpoint(_existing(args.checkpoint))
    report = evaluate(TransformerScorer(model, vocab), suites, corpus)
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_dict(), indent=1) + "\n", encoding="utf-8")
    if args.csv:
        Path(args.csv).write_text(report.to_csv(), encoding="utf-8")
    print(report.format_table(), file=sys.stderr)
    print(json.dumps(report.to_dict()))
    return 0


def cmd_sweep(args) -> int:
    from .tokenizer import Vocabulary
    from .trainer import SweepSpec, prepare_dataset, run_sweep

    try:
        grid = [float(v) if args.axis == "weight" else int(v) for v in args.grid.split(",")]
    except ValueError:
        raise CLIError(f"cannot parse --grid {args.grid!r}") from None
    spec = SweepSpec(args.axis, grid)
    config = _config(args)
    for v in spec.values:  # validate the whole grid before training anything
        spec.point_config(config, v)
    suites = _suites(args.suites)
    corpus = _read_corpus(args.corpus) if args.corpus else None
    vocab = Vocabulary.load(_existing(args.vocab))
    dataset = prepare_dataset(_read_trees(args.trees), config.kind, vocab, seed=config.seed)
    rows = run_sweep(spec, config, dataset, vocab, suites, corpus, out_csv=args.out)
    print(json.dumps({"axis": args.axis, "rows": rows, "out": args.out}))
    return 0


def cmd_inspect(args) -> int:
    import torch

    from .loss import aggregate_word_attention, tree_planting_loss
    from .model import load_checkpoint
    from .supervision import supervision_matrix
    from .trainer import sentence_distances
    from .treebank import BOS, augment_sentence

    model, vocab, selection, payload = load_checkpoint(_existing(args.checkpoint))
    words = tuple(args.sentence.split())
    if not words:
        raise CLIError("--sentence is empty")
    if words[0] != BOS:
        words = augment_sentence(words).words
    ids, spans = vocab.encode_with_alignment(words)
    if len(ids) > model.config.max_len:
        raise CLIError(f"sentence has {len(ids)} tokens, model context is {model.config.max_len}")

    sup = None
    if args.trees:
        trees = _read_trees(args.trees)
        match = [t for t in trees if tuple(t.words) in (words, words[1:-1])]
        if not match:
            raise CLIError(f"{args.trees} has no tree for the given sentence")
        kind = args.kind or (payload.get("train_config") or {}).get("kind", "dep")
        if kind == "zero":
            raise CLIError("cannot compare against supervision of kind 'zero'; pass --kind")
        d = sentence_distances(match[:1], kind, seed=(payload.get("train_config") or {}).get("seed", 0))[0]
        sup = supervision_matrix(d)

    with torch.no_grad():
        _, record = model(torch.tensor(ids), selection)
    heads = []
    for key in selection:
        w = aggregate_word_attention(record[key].double(), spans).numpy()
        entry = {"layer": key[0], "head": key[1], "W": w.tolist()}
        if sup is not None:
            rows = [tree_planting_loss(sup[r : r + 1], w[r : r + 1], n_words=2) for r in range(len(w))]
            entry["row_kl"] = rows
            entry["mean_kl"] = float(np.mean(rows))
        heads.append(entry)
    for h in heads:
        print(f"head ({h['layer']}, {h['head']})", file=sys.stderr)
        for r, row in enumerate(h["W"]):
            cells = " ".join(f"{x:.3f}" for x in row[: r + 1])
            kl = f"  KL={h['row_kl'][r]:.4f}" if "row_kl" in h else ""
            print(f"  {words[r + 1]:>14} | {cells}{kl}", file=sys.stderr)
    print(json.dumps({"words": list(words), "heads": heads}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="treeplant", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("preprocess", help="materialise distance and supervision matrices as JSONL")
    sp.add_argument("--trees", required=True)
    sp.add_argument("--kind", required=True, choices=KINDS)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_preprocess)

    sp = sub.add_parser("train-vocab", help="learn a byte-level BPE vocabulary")
    sp.add_argument("--trees", required=True, nargs="+", help="treebank or plain-text files")
    sp.add_argument("--vocab-size", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_train_vocab)

    def add_train_flags(sp):
        sp.add_argument("--trees", required=True)
        sp.add_argument("--kind", required=True, choices=KINDS)
        sp.add_argument("--vocab", required=True)
        sp.add_argument("--config", help="JSON config; explicit flags override its values")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--lam", type=float)
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--batch-size", type=int)
        sp.add_argument("--lr", type=float)
        sp.add_argument("--max-steps", type=int)

    sp = sub.add_parser("train", help="train a tree-planted transformer")
    add_train_flags(sp)
    sp.add_argument("--heads", help="tree-planted heads as LAYER:HEAD,...")
    sp.add_argument("--out", required=True, help="checkpoint path")
    sp.add_argument("--log", help="JSONL training log")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="minimal-pair suites and word perplexity")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--suites", nargs="*")
    sp.add_argument("--corpus")
    sp.add_argument("--report", help="write the JSON report here")
    sp.add_argument("--csv", help="write the CSV report here")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("sweep", help="train/evaluate over a head, layer or weight grid")
    add_train_flags(sp)
    sp.add_argument("--axis", required=True, choices=AXES)
    sp.add_argument("--grid", required=True, help="comma-separated grid values")
    sp.add_argument("--suites", nargs="*")
    sp.add_argument("--corpus")
    sp.add_argument("--out", required=True, help="CSV output")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("inspect", help="dump word-level attention of tree-planted heads")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--sentence", required=True)
    sp.add_argument("--trees", help="treebank holding the sentence's tree, to report per-row KL")
    sp.add_argument("--kind", choices=[k for k in KINDS if k != "zero"])
    sp.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CLIError, ConfigError, TreebankError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
