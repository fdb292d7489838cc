"""Batch command-line driver for the whole pipeline.

Subcommands mirror the pipeline stages: preprocess (XML to instances),
filter, train, predict, evaluate, analyze, attention-export. Every run
writes a manifest next to its outputs recording the resolved
configuration, seed and paths; identical inputs and seed reproduce every
output byte for byte (timestamps live only in the manifest).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict

from . import __version__, corpus, evaluation, filtering, rng as rng_mod, training
from .autodiff import NonFiniteError
from .corpus import CorpusError
from .features import PositionVocab, build_vocab, featurize, load_word_vectors
from .labels import label_id, label_name
from .model import (
    ModelConfig,
    build_model,
    default_config,
    forward,
    load_checkpoint,
    predict_class,
    save_checkpoint,
)
from .training import TrainConfig, TrainingDiverged


def _write_manifest(out_path: str, command: str, config: dict,
                    inputs: dict, outputs: dict, seed=None, threads=1) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "threads": threads,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
        "created_unix": time.time(),
    }
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")


def _manifest_path(anchor: str) -> str:
    if os.path.isdir(anchor):
        return os.path.join(anchor, "run_manifest.json")
    return anchor + ".manifest.json"


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config file must hold one JSON object")
    return data


def _resolve(defaults: dict, file_cfg: dict, args: argparse.Namespace) -> dict:
    """Precedence: defaults < config file < explicit command-line flags."""
    resolved = dict(defaults)
    for key, value in file_cfg.items():
        if key not in resolved:
            raise ValueError(f"unknown config key {key!r}")
        resolved[key] = value
    for key in resolved:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _featurize_all(instances, vocab, pv):
    return [
        featurize(inst.tokens, inst.drug_a, inst.drug_b, inst.label, vocab, pv)
        for inst in instances
    ]


def _cmd_preprocess(args) -> int:
    records = corpus.parse_corpus(args.corpus)
    instances = corpus.generate_instances(records)
    corpus.write_instances(args.out, instances)
    _write_manifest(_manifest_path(args.out), "preprocess", {},
                    {"corpus": args.corpus}, {"instances": args.out},
                    threads=args.threads)
    print(f"wrote {len(instances)} instances from {len(records)} sentences")
    return 0


def _cmd_filter(args) -> int:
    instances = corpus.read_instances(args.instances)
    config = filtering.FilterConfig()
    for name in args.disable or []:
        config.disable(name)
    report = filtering.apply_filters(instances, mode=args.mode, config=config)
    corpus.write_instances(args.out, report.kept)
    filtering.write_report(args.report, report)
    _write_manifest(_manifest_path(args.out), "filter", asdict(config),
                    {"instances": args.instances},
                    {"filtered": args.out, "report": args.report},
                    threads=args.threads)
    print(f"kept {len(report.kept)} of {report.n_input} "
          f"({report.n_removed} removed, {report.n_removed_positive} positive)")
    return 0


_TRAIN_DEFAULTS = {
    "variant": "b-lstm",
    "hidden": None,        # variant default unless set
    "word_dim": 100,
    "pos_dim": 10,
    "radius": 50,
    "min_count": 1,
    "keep_prob": None,     # variant default unless set
    "l2": None,            # variant default unless set
    "lr": 1e-3,
    "batch_size": 200,
    "epochs": 10,
    "val_fraction": 0.05,
    "word_vectors": None,
    "seed": 0,
}


def _cmd_train(args) -> int:
    file_cfg = _load_config_file(args.config)
    cfg = _resolve(_TRAIN_DEFAULTS, file_cfg, args)
    seed = int(cfg["seed"])

    base = default_config(cfg["variant"])
    mcfg = ModelConfig(
        variant=cfg["variant"],
        hidden=cfg["hidden"] if cfg["hidden"] is not None else base.hidden,
        word_dim=cfg["word_dim"],
        p1_dim=cfg["pos_dim"],
        p2_dim=cfg["pos_dim"],
        keep_prob=cfg["keep_prob"] if cfg["keep_prob"] is not None else base.keep_prob,
        l2=cfg["l2"] if cfg["l2"] is not None else base.l2,
    )
    tcfg = TrainConfig(
        lr=cfg["lr"], batch_size=cfg["batch_size"], max_epochs=cfg["epochs"],
        seed=seed, val_fraction=cfg["val_fraction"],
    )

    instances = corpus.read_instances(args.instances)
    if not instances:
        raise ValueError(f"{args.instances}: no instances")
    vocab = build_vocab([i.tokens for i in instances], min_count=cfg["min_count"])
    pv = PositionVocab(cfg["radius"])
    word_matrix = None
    if cfg["word_vectors"]:
        word_matrix = load_word_vectors(
            cfg["word_vectors"], vocab, cfg["word_dim"],
            rng_mod.named_stream(seed, "word-vectors"),
        )
    params = build_model(mcfg, len(vocab), len(pv), seed=seed,
                         word_matrix=word_matrix)
    feats = _featurize_all(instances, vocab, pv)

    result = training.train(params, feats, tcfg, mcfg)

    os.makedirs(args.out_dir, exist_ok=True)
    save_checkpoint(args.out_dir, result.params, mcfg, vocab, pv)
    log_path = os.path.join(args.out_dir, "train_log.jsonl")
    training.write_log(log_path, result.log)
    _write_manifest(
        _manifest_path(args.out_dir), "train",
        {"model": asdict(mcfg), "train": asdict(tcfg),
         "min_count": cfg["min_count"], "radius": cfg["radius"],
         "word_vectors": cfg["word_vectors"]},
        {"instances": args.instances},
        {"checkpoint": args.out_dir, "log": log_path},
        seed=seed, threads=args.threads,
    )
    best = result.log[result.best_epoch]
    print(f"best epoch {best.epoch}: heldout F1 {best.heldout_f1:.4f} "
          f"(train loss {best.train_loss:.4f})")
    return 0


def _predictions(params, mcfg, instances, vocab, pv, want_alpha: bool):
    feats = _featurize_all(instances, vocab, pv)
    preds, alphas = [], []
    for f in feats:
        probs, alpha = forward(params, mcfg, f)
        preds.append(predict_class(probs))
        alphas.append(None if alpha is None else alpha.data.tolist())
    if want_alpha and all(a is None for a in alphas):
        raise ValueError(f"variant {mcfg.variant!r} has no attention weights")
    return preds, alphas


def _write_predictions(path, instances, preds) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst, pred in zip(instances, preds):
            fh.write(json.dumps({
                "doc_id": inst.doc_id,
                "sent_id": inst.sent_id,
                "pair_id": inst.pair_id,
                "label": label_name(pred),
            }) + "\n")


def _read_predictions(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(json.loads(line))
    return out


def _cmd_predict(args) -> int:
    params, mcfg, vocab, pv = load_checkpoint(args.checkpoint)
    instances = corpus.read_instances(args.instances)
    preds, alphas = _predictions(params, mcfg, instances, vocab, pv,
                                 want_alpha=args.attention is not None)
    _write_predictions(args.out, instances, preds)
    outputs = {"predictions": args.out}
    if args.attention is not None:
        evaluation.write_attention_records(
            args.attention, list(zip(instances, alphas)))
        outputs["attention"] = args.attention
    _write_manifest(_manifest_path(args.out), "predict", {"variant": mcfg.variant},
                    {"checkpoint": args.checkpoint, "instances": args.instances},
                    outputs, threads=args.threads)
    print(f"predicted {len(preds)} instances")
    return 0


def _aligned_gold(gold_instances, preds) -> list[int]:
    if len(gold_instances) != len(preds):
        raise ValueError(
            f"{len(preds)} predictions for {len(gold_instances)} gold instances"
        )
    for inst, rec in zip(gold_instances, preds):
        if rec.get("pair_id") != inst.pair_id:
            raise ValueError(
                f"prediction for pair {rec.get('pair_id')!r} does not match "
                f"gold pair {inst.pair_id!r}"
            )
    return [inst.label for inst in gold_instances]


def _cmd_evaluate(args) -> int:
    gold_instances = corpus.read_instances(args.gold)
    preds = _read_predictions(args.predictions)
    gold = _aligned_gold(gold_instances, preds)
    pred_ids = [label_id(rec["label"]) for rec in preds]
    filtered = []
    if args.filter_report:
        filtered = [label_id(name)
                    for name in filtering.read_removed_labels(args.filter_report)]
    report = evaluation.evaluate(gold, pred_ids, filtered)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    _write_manifest(_manifest_path(args.out), "evaluate", {},
                    {"predictions": args.predictions, "gold": args.gold,
                     "filter_report": args.filter_report},
                    {"report": args.out}, threads=args.threads)
    print(f"micro P {report.micro_p:.4f} R {report.micro_r:.4f} "
          f"F1 {report.micro_f1:.4f} MAVG {report.mavg:.4f}")
    return 0


def _cmd_analyze(args) -> int:
    gold_instances = corpus.read_instances(args.gold)
    preds = _read_predictions(args.predictions)
    gold = _aligned_gold(gold_instances, preds)
    pred_ids = [label_id(rec["label"]) for rec in preds]
    flags = evaluation.correctness(gold, pred_ids)
    stats = evaluation.length_stats(gold_instances, flags)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=1)
        fh.write("\n")
    _write_manifest(_manifest_path(args.out), "analyze", {},
                    {"predictions": args.predictions, "gold": args.gold},
                    {"stats": args.out}, threads=args.threads)
    print(f"wrote length statistics for {len(flags)} instances")
    return 0


def _cmd_attention_export(args) -> int:
    params, mcfg, vocab, pv = load_checkpoint(args.checkpoint)
    if mcfg.variant == "b-lstm":
        raise ValueError("checkpoint variant 'b-lstm' has no attention weights")
    instances = corpus.read_instances(args.instances)
    _, alphas = _predictions(params, mcfg, instances, vocab, pv, want_alpha=True)
    evaluation.write_attention_records(args.out, list(zip(instances, alphas)))
    _write_manifest(_manifest_path(args.out), "attention-export",
                    {"variant": mcfg.variant},
                    {"checkpoint": args.checkpoint, "instances": args.instances},
                    {"attention": args.out}, threads=args.threads)
    print(f"exported attention for {len(instances)} instances")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddilstm",
        description="LSTM drug-drug interaction classification pipeline",
    )
    parser.add_argument("--threads", type=int, default=1,
                        help="worker cap (recorded; stages run sequentially)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="XML corpus -> instance file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_preprocess)

    p = sub.add_parser("filter", help="drop trivially non-interacting pairs")
    p.add_argument("--instances", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--mode", choices=("train", "test"), default="train")
    p.add_argument("--disable", action="append", metavar="PATTERN",
                   help="switch off one filter pattern (repeatable)")
    p.set_defaults(fn=_cmd_filter)

    p = sub.add_parser("train", help="train one variant on an instance file")
    p.add_argument("--instances", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config", help="JSON file with any of the train keys")
    p.add_argument("--variant", choices=("b-lstm", "ab-lstm", "joint"))
    p.add_argument("--hidden", type=int)
    p.add_argument("--word-dim", type=int, dest="word_dim")
    p.add_argument("--pos-dim", type=int, dest="pos_dim")
    p.add_argument("--radius", type=int)
    p.add_argument("--min-count", type=int, dest="min_count")
    p.add_argument("--keep-prob", type=float, dest="keep_prob")
    p.add_argument("--l2", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--epochs", type=int)
    p.add_argument("--val-fraction", type=float, dest="val_fraction")
    p.add_argument("--word-vectors", dest="word_vectors")
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("predict", help="label an instance file with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--instances", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--attention", help="also export attention weights here")
    p.set_defaults(fn=_cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against gold")
    p.add_argument("--predictions", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--filter-report", dest="filter_report")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("analyze", help="length/separation stats by outcome")
    p.add_argument("--predictions", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_analyze)

    p = sub.add_parser("attention-export", help="attention weights per instance")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--instances", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_attention_export)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (CorpusError, TrainingDiverged, NonFiniteError, ValueError,
            OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
