"""Command-line entry point.

Machine-readable output goes to stdout or to files; logging goes to stderr,
so the two never mix. Every subcommand leaves its input files untouched.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import load_dataset, load_embeddings, build_vocab, save_dataset
from .model import ModelConfig, forward_sentence, predict_instance
from .scope import Lexicon, annotate_corpus
from .toydata import write_toy_corpus
from .training import evaluate, train

log = logging.getLogger("hgcn_absa")


def _read_config(path: str | None) -> ModelConfig:
    if path is None:
        return ModelConfig()
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return ModelConfig.from_dict(data)


def cmd_train(args: argparse.Namespace) -> int:
    config = _read_config(args.config)
    corpus = load_dataset(args.data)
    if not corpus:
        log.error("training data %s is empty", args.data)
        return 1
    dev_corpus = load_dataset(args.dev) if args.dev else None
    embedding_table = None
    if args.emb:
        vocab = build_vocab(corpus)
        embedding_table = load_embeddings(args.emb, vocab, config.unk_embedding)
        if embedding_table.missing:
            log.info("%d vocabulary words missing from %s",
                     len(embedding_table.missing), args.emb)
    else:
        log.info("no --emb given; embeddings are randomly initialized")
    log_path = Path(args.log) if args.log else Path(args.out).with_suffix(".log.jsonl")
    with open(log_path, "w", encoding="utf-8") as fh:
        def on_epoch(record):
            fh.write(json.dumps(record.to_dict()) + "\n")
            fh.flush()
            log.info("epoch %d: loss=%.4f acc=%.4f scope_f1=%.4f",
                     record.epoch, record.loss, record.accuracy, record.scope_f1)

        result = train(corpus, config, embedding_table=embedding_table,
                       dev_corpus=dev_corpus, on_epoch=on_epoch)
    save_checkpoint(args.out, result.params, config)
    log.info("checkpoint written to %s, epoch log to %s", args.out, log_path)
    if result.best_state is not None:
        best_path = Path(args.out).with_suffix(".best.json")
        result.restore_best()
        save_checkpoint(best_path, result.params, config)
        log.info("best dev accuracy at epoch %d; checkpoint written to %s",
                 result.best_epoch, best_path)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    params, config = load_checkpoint(args.ckpt)
    corpus = load_dataset(args.data)
    metrics = evaluate(corpus, params, config)
    json.dump(metrics, sys.stdout, indent=1)
    sys.stdout.write("\n")
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    params, config = load_checkpoint(args.ckpt)
    corpus = load_dataset(args.data)
    rows = []
    for idx, sentence in enumerate(corpus):
        shared = forward_sentence(sentence, params, config)
        for k, target in enumerate(sentence.targets):
            pred = predict_instance(sentence, k, params, config, shared=shared)
            rows.append({
                "sentence": idx,
                "target": k,
                "target_span": list(target.span),
                "bio": pred.bio,
                "scope_span": list(pred.span) if pred.span else None,
                "distribution": pred.distribution,
                "polarity": pred.polarity,
            })
    Path(args.out).write_text(json.dumps(rows, indent=1) + "\n", encoding="utf-8")
    log.info("wrote %d predictions to %s", len(rows), args.out)
    return 0


def cmd_annotate_auto(args: argparse.Namespace) -> int:
    corpus = load_dataset(args.data)
    lexicon = Lexicon.from_file(args.lexicon)
    annotate_corpus(corpus, lexicon, strategy=args.strategy)
    save_dataset(corpus, args.out)
    auto = sum(t.scope_provenance == "auto" for s in corpus for t in s.targets)
    weak = sum(t.scope_provenance == "auto-weak" for s in corpus for t in s.targets)
    log.info("annotated %s: %d auto, %d auto-weak -> %s", args.data, auto, weak, args.out)
    return 0


def cmd_dump_attention(args: argparse.Namespace) -> int:
    params, config = load_checkpoint(args.ckpt)
    corpus = load_dataset(args.data)
    if not 0 <= args.sentence < len(corpus):
        log.error("sentence index %d outside 0..%d", args.sentence, len(corpus) - 1)
        return 1
    if not config.use_cgcn:
        log.error("checkpoint was trained without the constituency branch")
        return 1
    sentence = corpus[args.sentence]
    shared = forward_sentence(sentence, params, config)
    payload = {
        "sentence": args.sentence,
        "words": sentence.tokens,
        "constituents": shared.constituents,
        "matrix": shared.attention.data.tolist(),
    }
    Path(args.out).write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")
    log.info("attention matrix for sentence %d written to %s", args.sentence, args.out)
    return 0


def cmd_gen_toy(args: argparse.Namespace) -> int:
    write_toy_corpus(args.out, size=args.size, seed=args.seed,
                     min_targets=args.min_targets, max_targets=args.max_targets)
    log.info("wrote %d toy sentences to %s", args.size, args.out)
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .annotation.server import create_app

    lexicon = Lexicon.from_file(args.lexicon) if args.lexicon else None
    app = create_app(dataset_path=args.data, store_dir=args.store,
                     lexicon=lexicon, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    from .reporting import write_report

    written = write_report(out_dir=args.out_dir, log_path=args.log,
                           metrics_path=args.metrics, attention_path=args.attention)
    for path in written:
        log.info("wrote %s", path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hgcn-absa",
        description="Aspect-level sentiment analysis with hybrid syntax GCNs "
                    "and joint scope tagging.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--data", required=True, help="dataset JSON")
    p.add_argument("--emb", help="plain-text embedding table (word v1..vD)")
    p.add_argument("--config", help="config JSON mirroring ModelConfig fields")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="epoch log path (JSON lines); defaults next to --out")
    p.add_argument("--dev", help="dev split; enables best-epoch checkpointing")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="print a metrics report as JSON on stdout")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("predict", help="write per-instance scope/polarity predictions")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("annotate-auto",
                       help="rule-based scope pre-annotation into a new dataset file")
    p.add_argument("--data", required=True)
    p.add_argument("--lexicon", required=True, help="one opinion word per line")
    p.add_argument("--out", required=True)
    p.add_argument("--strategy", choices=("nearest", "clause"), default="nearest")
    p.set_defaults(fn=cmd_annotate_auto)

    p = sub.add_parser("dump-attention",
                       help="write one sentence's constituent-token attention as JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--sentence", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_dump_attention)

    p = sub.add_parser("gen-toy", help="generate the synthetic separable corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--size", type=int, default=50)
    p.add_argument("--min-targets", type=int, default=2)
    p.add_argument("--max-targets", type=int, default=2)
    p.set_defaults(fn=cmd_gen_toy)

    p = sub.add_parser("serve", help="start the scope annotation HTTP service")
    p.add_argument("--data", required=True)
    p.add_argument("--store", required=True, help="directory for annotation records")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--lexicon", help="opinion lexicon for the pre-annotate endpoint")
    p.add_argument("--ui", help="directory with the built UI bundle to serve at /")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("report",
                       help="render training/eval figures and CSVs from logs")
    p.add_argument("--log", help="epoch log written by train (JSON lines)")
    p.add_argument("--metrics", help="metrics JSON as printed by eval")
    p.add_argument("--attention", help="attention JSON written by dump-attention")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
