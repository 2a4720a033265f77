"""Command-line interface.

Subcommands: pem, link, train-md, train-pel, train-ed, eval, kappa, stats,
annotate-serve. Exit codes: 0 success, 1 validation error, 2 IO error.
`--seed` pins every source of randomness.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import core, datasets, ed, evaluation, md, pel, pem, pipeline
from .core import SchemaError
from .encoder import (
    EncoderConfig,
    TrainableEncoder,
    build_vocab,
    load_encoder,
    load_vectors_file,
    save_encoder,
)
from .optim import TrainConfig


def _train_config(args) -> TrainConfig:
    return TrainConfig(epochs=args.epochs, lr=args.lr,
                       batch_size=args.batch_size,
                       weight_decay=args.weight_decay, seed=args.seed)


def _add_train_flags(p, epochs, lr):
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--lr", type=float, default=lr)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)


def _load_encoder_arg(args):
    if getattr(args, "vectors", None):
        return load_vectors_file(args.vectors)
    return load_encoder(args.encoder)


def cmd_pem(args) -> int:
    convs = core.read_conversations(args.input)
    out = []
    for conv in convs:
        spans = []
        for t in conv.user_turn_indices():
            spans.extend(pem.detect_personal_mentions(conv.turns[t], t))
        out.append({"id": conv.id, "personal": [
            {"turn": s.turn_index, "start_tok": s.tok_start,
             "end_tok": s.tok_end} for s in spans]})
    Path(args.output).write_text(core.canonical_json(out), encoding="utf-8")
    return 0


def cmd_link(args) -> int:
    convs = core.read_conversations(args.conversations)
    models = pipeline.PipelineModels(
        encoder=_load_encoder_arg(args),
        md_head=md.load_md_head(args.md),
        scorer=pel.load_scorer(args.pel),
        kb=ed.load_kb(args.kb),
        ed_weights=ed.load_weights(args.ed_weights),
        candidates_k=args.candidates,
        antecedents_user_only=not args.system_antecedents)
    annotations = pipeline.link_all(convs, models)
    core.write_annotations(args.out, annotations)
    return 0


def cmd_train_md(args) -> int:
    convs = core.read_conversations(args.conversations)
    gold = core.read_annotations(args.gold)
    examples = datasets.md_examples(convs, gold)
    if args.vectors:
        enc = load_vectors_file(args.vectors)
    else:
        config = EncoderConfig(dim=args.dim, n_layers=args.layers,
                               max_context_tokens=args.max_context)
        enc = TrainableEncoder.init(config, build_vocab(convs),
                                    seed=args.seed)
    result = md.train_md(examples, _train_config(args), enc)
    md.save_md_head(args.out, result.head)
    if args.encoder_out and isinstance(result.encoder, TrainableEncoder):
        save_encoder(args.encoder_out, result.encoder)
    print(json.dumps({"final_loss": result.losses[-1] if result.losses
                      else None, "epochs": args.epochs}))
    return 0


def cmd_train_pel(args) -> int:
    convs = core.read_conversations(args.conversations)
    gold = core.read_annotations(args.gold)
    examples = datasets.pel_examples(convs, gold)
    if args.vectors:
        enc = load_vectors_file(args.vectors)
        train_encoder = False
    elif args.encoder:
        enc = load_encoder(args.encoder)
        train_encoder = not args.freeze_encoder
    else:
        config = EncoderConfig(dim=args.dim, n_layers=args.layers,
                               max_context_tokens=args.max_context)
        enc = TrainableEncoder.init(config, build_vocab(convs),
                                    seed=args.seed)
        train_encoder = True
    val = None
    val_gold = datasets.split_examples(gold, "val")
    if val_gold:
        val = datasets.pel_examples(convs, val_gold)
    result = pel.train_pel(examples, _train_config(args), enc,
                           train_encoder=train_encoder, val_examples=val,
                           hidden=args.hidden)
    pel.save_scorer(args.out, result.scorer)
    if args.encoder_out and isinstance(result.encoder, TrainableEncoder):
        save_encoder(args.encoder_out, result.encoder)
    print(json.dumps({"tau": result.scorer.tau, "val_pair_f1": result.val_f1,
                      "final_loss": result.losses[-1] if result.losses
                      else None}))
    return 0


def cmd_train_ed(args) -> int:
    convs = core.read_conversations(args.conversations)
    gold = core.read_annotations(args.gold)
    examples = datasets.ed_examples(convs, gold)
    kb = ed.load_kb(args.kb)
    weights = ed.train_ed(examples, kb, k=args.candidates)
    ed.save_weights(args.out, weights)
    print(json.dumps({"lambda_prior": weights.lambda_prior,
                      "lambda_local": weights.lambda_local,
                      "lambda_coh": weights.lambda_coh}))
    return 0


def cmd_eval(args) -> int:
    gold = core.read_annotations(args.gold)
    pred = core.read_annotations(args.pred)
    gold_items = evaluation.extract_items(gold, args.mode, args.include_nid)
    pred_items = evaluation.extract_items(pred, args.mode, args.include_nid)
    report = evaluation.micro_prf(gold_items, pred_items, args.mode,
                                  args.matching)
    out = report.as_dict()
    out["mode"] = args.mode
    out["matching"] = args.matching
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def cmd_kappa(args) -> int:
    rows: dict[str, dict[str, int]] = {}
    categories: set[str] = set()
    with open(args.ratings, newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or (i == 0 and not row[-1].strip().lstrip("-").isdigit()):
                continue  # header or blank
            if len(row) != 3:
                raise SchemaError(
                    f"{args.ratings}:{i + 1}: expected subject,category,count")
            subject, category, count = (c.strip() for c in row)
            rows.setdefault(subject, {})[category] = \
                rows.get(subject, {}).get(category, 0) + int(count)
            categories.add(category)
    cats = sorted(categories)
    matrix = [[rows[s].get(c, 0) for c in cats] for s in sorted(rows)]
    kappa = evaluation.fleiss_kappa(matrix)
    print(json.dumps({"kappa": kappa, "subjects": len(matrix),
                      "categories": cats}, indent=2))
    return 0


def cmd_stats(args) -> int:
    _, stats = evaluation.load_dataset(args.input)
    print(json.dumps(stats.as_dict(), indent=2, sort_keys=True))
    return 0


def cmd_annotate_serve(args) -> int:
    import uvicorn

    from .annosvc.api import create_app
    from .annosvc.project import Project

    project = Project.open_or_create(args.project)
    app = create_app(project, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crel", description="Conversational entity linking toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pem", help="detect personal entity mentions")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(fn=cmd_pem)

    p = sub.add_parser("link", help="annotate conversations end to end")
    p.add_argument("--conversations", required=True)
    enc_group = p.add_mutually_exclusive_group(required=True)
    enc_group.add_argument("--encoder", help="trainable encoder checkpoint")
    enc_group.add_argument("--vectors", help="precomputed vectors file")
    p.add_argument("--md", required=True, help="mention-detection checkpoint")
    p.add_argument("--pel", required=True, help="pair-scorer checkpoint")
    p.add_argument("--kb", required=True, help="knowledge-base directory")
    p.add_argument("--ed-weights", required=True)
    p.add_argument("--candidates", type=int, default=10)
    p.add_argument("--system-antecedents", action="store_true",
                   help="also consider SYSTEM-turn mentions as antecedents")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_link)

    p = sub.add_parser("train-md", help="train the mention detector")
    p.add_argument("--conversations", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--vectors", help="precomputed vectors file "
                   "(trains the head only)")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--max-context", type=int, default=4096)
    _add_train_flags(p, epochs=200, lr=5e-5)
    p.add_argument("--out", required=True)
    p.add_argument("--encoder-out")
    p.set_defaults(fn=cmd_train_md)

    p = sub.add_parser("train-pel", help="train the pair scorer")
    p.add_argument("--conversations", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--vectors", help="precomputed vectors file "
                   "(trains the scorer only)")
    p.add_argument("--encoder", help="start from this encoder checkpoint")
    p.add_argument("--freeze-encoder", action="store_true",
                   help="keep the loaded encoder fixed")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--max-context", type=int, default=4096)
    p.add_argument("--hidden", type=int, default=None)
    _add_train_flags(p, epochs=200, lr=1e-5)
    p.add_argument("--out", required=True)
    p.add_argument("--encoder-out")
    p.set_defaults(fn=cmd_train_pel)

    p = sub.add_parser("train-ed", help="fit disambiguation weights")
    p.add_argument("--conversations", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--kb", required=True)
    p.add_argument("--candidates", type=int, default=10)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_train_ed)

    p = sub.add_parser("eval", help="score predictions against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--mode", choices=evaluation.MODES, default="md")
    p.add_argument("--matching", choices=evaluation.MATCHINGS,
                   default="strong")
    p.add_argument("--include-nid", action="store_true",
                   help="score not-in-dialogue personal mentions too")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("kappa", help="Fleiss' kappa from a ratings CSV")
    p.add_argument("--ratings", required=True,
                   help="CSV rows: subject,category,count")
    p.set_defaults(fn=cmd_kappa)

    p = sub.add_parser("stats", help="dataset statistics")
    p.add_argument("--input", required=True)
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("annotate-serve", help="run the annotation service")
    p.add_argument("--project", required=True)
    p.add_argument("--port", type=int, default=8777)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui", help="directory of static UI assets")
    p.set_defaults(fn=cmd_annotate_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except FileNotFoundError as e:
        print(f"error: file not found: {e.filename or e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (SchemaError, ValueError, LookupError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
