"""Command line interface: train, predict, eval, verify, gen-synth."""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace

import numpy as np

from .crf import viterbi
from .data import (
    ModelState,
    SyntheticConfig,
    generate_synthetic,
    load_model,
    read_conll,
    save_model,
    write_conll,
)
from .encoder import encode, load_external_logits
from .errors import DataError, McrfError
from .evaluation import chunk_prf, format_report, illegal_stats
from .masking import MaskSpec, constrained_viterbi
from .postproc import STRATEGIES, extract_segments, repair_tags
from .schemes import Scheme, build_tagset, illegal_transition_set
from .training import TrainConfig, train
from .verification import run_verification

DEFAULT_TYPE_NAMES = (
    "LOC", "ORG", "PER", "MISC", "GPE", "FAC", "EVT", "PROD", "LANG", "LAW",
)


def _entity_types(count: int) -> tuple[str, ...]:
    if count < 1:
        raise DataError("need at least one entity type")
    if count <= len(DEFAULT_TYPE_NAMES):
        return DEFAULT_TYPE_NAMES[:count]
    extra = tuple(f"TYPE{i}" for i in range(len(DEFAULT_TYPE_NAMES), count))
    return DEFAULT_TYPE_NAMES + extra


def _decode_with_model(model: ModelState, emissions) -> list[int]:
    if model.mode == "crf":
        return viterbi(emissions, model.trans)
    spec = MaskSpec(
        rules=illegal_transition_set(model.tagset),
        mask_value=model.mask_value,
        enforce_start=model.enforce_start,
    )
    return constrained_viterbi(emissions, model.trans, spec)


def _model_emissions(model: ModelState, sentences, logits_path: str | None):
    if logits_path is not None:
        return load_external_logits(
            logits_path, tags=model.tagset.tags, expected_sentences=len(sentences)
        )
    return [encode(model.vocab.lookup_all(s.tokens), model.encoder) for s in sentences]


def cmd_train(args: argparse.Namespace) -> int:
    tagset = build_tagset(Scheme(args.scheme), _entity_types(args.types))
    train_sentences = read_conll(args.data, tagset)
    dev_sentences = read_conll(args.dev, tagset)
    config = TrainConfig(
        mode=args.mode,
        mask_value=args.mask_value,
        enforce_start=not args.no_enforce_start,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        max_epochs=args.epochs,
        max_iterations=args.max_iterations,
        eval_every=args.eval_every,
        embedding_dim=args.embedding_dim,
        seed=args.seed,
    )
    train_logits = dev_logits = None
    if args.emissions:
        if not args.dev_emissions:
            raise DataError("--emissions requires --dev-emissions for the dev corpus")
        train_logits = load_external_logits(
            args.emissions, tags=tagset.tags, expected_sentences=len(train_sentences)
        )
        dev_logits = load_external_logits(
            args.dev_emissions, tags=tagset.tags, expected_sentences=len(dev_sentences)
        )

    runs = []
    for k in range(args.seeds):
        cfg = replace(config, seed=args.seed + k)
        t0 = time.perf_counter()
        model, report = train(
            train_sentences, dev_sentences, cfg, tagset,
            train_logits=train_logits, dev_logits=dev_logits,
        )
        elapsed = time.perf_counter() - t0
        runs.append((cfg.seed, model, report, elapsed))
        print(
            f"seed {cfg.seed}: dev_f1={report.final.dev_f1:.4f} "
            f"dev_nll={report.final.dev_nll:.4f} "
            f"illegal={report.final.illegal_pct:.2f}% ({elapsed:.1f}s)"
        )
    f1s = [r.final.dev_f1 for _, _, r, _ in runs]
    best = max(range(len(runs)), key=lambda k: f1s[k])
    if args.seeds > 1:
        print(f"best seed {runs[best][0]}: dev_f1={f1s[best]:.4f}, mean dev_f1={np.mean(f1s):.4f}")
    save_model(args.out, runs[best][1])
    print(f"model written to {args.out}")
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(runs[best][2].to_text())
        print(f"report written to {args.report}")
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    sentences = read_conll(args.data, model.tagset)
    emissions = _model_emissions(model, sentences, args.emissions)
    predictions = [
        repair_tags(_decode_with_model(model, em), model.tagset, args.strategy)
        for em in emissions
    ]
    write_conll(args.out, sentences, model.tagset, predictions=predictions)
    print(f"predictions written to {args.out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    if args.gold or args.pred:
        if not (args.gold and args.pred):
            raise DataError("--gold and --pred must be given together")
        if args.model or args.data:
            raise DataError("use either --gold/--pred or --model/--data, not both")
        tagset = build_tagset(Scheme(args.scheme), _entity_types(args.types))
        gold_sents = read_conll(args.gold, tagset)
        pred_sents = read_conll(args.pred, tagset, validate=False)
        if len(gold_sents) != len(pred_sents):
            raise DataError(
                f"gold has {len(gold_sents)} sentences, predictions have {len(pred_sents)}"
            )
        for k, (g, p) in enumerate(zip(gold_sents, pred_sents)):
            if len(g.tokens) != len(p.tokens):
                raise DataError(
                    f"sentence {k + 1}: gold has {len(g.tokens)} tokens, "
                    f"prediction has {len(p.tokens)}"
                )
        gold = [s.gold for s in gold_sents]
        raw = [s.gold for s in pred_sents]
    else:
        if not (args.model and args.data):
            raise DataError("eval needs --model and --data (or --gold and --pred)")
        model = load_model(args.model)
        tagset = model.tagset
        sentences = read_conll(args.data, tagset)
        emissions = _model_emissions(model, sentences, args.emissions)
        gold = [s.gold for s in sentences]
        raw = [_decode_with_model(model, em) for em in emissions]
    predictions = [repair_tags(p, tagset, args.strategy) for p in raw]
    gold_segments = [extract_segments(g, tagset) for g in gold]
    raw_segments = [extract_segments(p, tagset) for p in raw]
    pred_segments = [extract_segments(p, tagset) for p in predictions]
    metrics = chunk_prf(gold_segments, pred_segments)
    stats = illegal_stats(gold_segments, raw_segments)
    print(format_report(metrics, stats))
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    results, elapsed = run_verification(seed=args.seed)
    for result in results:
        print(result.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed in {elapsed:.1f}s")
    return 0 if not failed else 1


def cmd_gen_synth(args: argparse.Namespace) -> int:
    config = SyntheticConfig(
        entity_types=_entity_types(args.types),
        scheme=Scheme(args.scheme),
        sentences=args.sentences,
        min_length=args.min_length,
        max_length=args.max_length,
        vocab_size=args.vocab_size,
        entity_density=args.entity_density,
        noise_rate=args.noise_rate,
    )
    splits = (
        ("train", args.sentences, args.seed),
        ("dev", max(1, args.sentences // 10), args.seed + 1),
        ("test", max(1, args.sentences // 10), args.seed + 2),
    )
    if not 0.0 < args.sample_fraction <= 1.0:
        raise DataError("--sample-fraction must lie in (0, 1]")
    for name, count, seed in splits:
        cfg = replace(config, sentences=count)
        tagset, sentences = generate_synthetic(cfg, seed)
        if name == "train" and args.sample_fraction < 1.0:
            keep = max(1, round(args.sample_fraction * len(sentences)))
            order = np.random.default_rng(seed + 3).permutation(len(sentences))[:keep]
            sentences = [sentences[int(i)] for i in sorted(order)]
        path = f"{args.out_prefix}_{name}.conll"
        write_conll(path, sentences, tagset)
        print(f"{path}: {len(sentences)} sentences")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcrf",
        description="Sequence labeling with linear-chain CRFs and transition masking.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on CoNLL data")
    p.add_argument("--data", required=True, help="training corpus (CoNLL)")
    p.add_argument("--dev", required=True, help="dev corpus (CoNLL)")
    p.add_argument("--scheme", choices=[s.value for s in Scheme], default="bio")
    p.add_argument("--types", type=int, default=3, help="number of entity types")
    p.add_argument("--mode", choices=["crf", "mcrf-decode", "mcrf-train"], default="crf")
    p.add_argument("--mask-value", type=float, default=-1e4)
    p.add_argument(
        "--no-enforce-start",
        action="store_true",
        help="do not mask tags that cannot open a sentence",
    )
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--max-iterations", type=int, default=1000)
    p.add_argument("--eval-every", type=int, default=50)
    p.add_argument("--embedding-dim", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=1, help="number of seeded trials")
    p.add_argument("--emissions", help="external logits file for the training corpus")
    p.add_argument("--dev-emissions", help="external logits file for the dev corpus")
    p.add_argument("--out", required=True, help="path for the model file")
    p.add_argument("--report", help="path for the evaluation-trace table")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="tag a corpus with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--strategy", choices=list(STRATEGIES), default="none")
    p.add_argument("--emissions", help="external logits file for the corpus")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score predictions against a gold corpus")
    p.add_argument("--model", help="model file (pair with --data)")
    p.add_argument("--data", help="gold corpus to decode and score")
    p.add_argument("--gold", help="gold corpus file (pair with --pred)")
    p.add_argument("--pred", help="predictions file; the tag is the last column")
    p.add_argument("--scheme", choices=[s.value for s in Scheme], default="bio")
    p.add_argument("--types", type=int, default=3, help="entity types for --gold/--pred")
    p.add_argument("--strategy", choices=list(STRATEGIES), default="none")
    p.add_argument("--emissions", help="external logits file for the corpus")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="run the oracle-based self checks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gen-synth", help="generate a synthetic labeled corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sentences", type=int, default=200)
    p.add_argument("--types", type=int, default=3)
    p.add_argument("--scheme", choices=[s.value for s in Scheme], default="bio")
    p.add_argument("--min-length", type=int, default=5)
    p.add_argument("--max-length", type=int, default=15)
    p.add_argument("--vocab-size", type=int, default=60)
    p.add_argument("--entity-density", type=float, default=0.2)
    p.add_argument("--noise-rate", type=float, default=0.02)
    p.add_argument("--sample-fraction", type=float, default=1.0)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_gen_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (McrfError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
