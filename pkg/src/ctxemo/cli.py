"""Command-line entry point: ``ctxemo {synth,train,eval,ablate,inspect,predict}``.

Config precedence is flags over ``--config`` JSON over the chosen preset.
Every command that trains or evaluates writes the effective config next to
its outputs.  Exit codes: 0 success, 2 config or validation error, 3 runtime
or numeric error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import ConfigError, ModelConfig
from .context2 import upsample_nearest
from .data import (DatasetError, LabelVocabulary, SignalPlan, SplitError, load_dataset, save_dataset, split,
                   synthesize_dataset)
from .data.schema import IMAGE_SIZE
from .fileio import ensure_dir, to_gray8, write_pgm
from .metrics import ablation_table
from .model import prepare_inputs
from .tensor import NonFiniteError, ShapeError, no_grad
from .training import (DEFAULT_VARIANTS, CheckpointError, DivergenceError, evaluate, load_checkpoint,
                       predict_dataset, save_checkpoint, train)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
LABEL_THRESHOLD = 0.5


class _Fail(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _parse_contexts(text: str) -> tuple[int, ...]:
    try:
        return tuple(sorted({int(c) for c in text.replace(",", "")}))
    except ValueError:
        raise ConfigError(f"bad context list {text!r}") from None


def _parse_variants(text: str) -> list[tuple[int, ...]]:
    return [_parse_contexts(v) for v in text.split(",") if v]


# config assembly -----------------------------------------------------------

_FLAG_FIELDS = {
    "lr": "lr", "epochs": "epochs", "batch_size": "batch_size", "beta": "beta", "mu": "mu",
    "lambda1": "lambda1", "lambda2": "lambda2", "fusion": "fusion", "context3": "context3_mode",
    "seed": "seed", "dtype": "dtype",
}


def build_config(args, kind: str = "image") -> ModelConfig:
    overrides: dict = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                overrides.update(json.load(fh))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from None
    for flag, name in _FLAG_FIELDS.items():
        v = getattr(args, flag, None)
        if v is not None:
            overrides[name] = v
    if getattr(args, "contexts", None):
        overrides["enabled_contexts"] = _parse_contexts(args.contexts)
    if "batch_size" not in overrides and kind == "video":
        overrides["batch_size"] = 1
    base = ModelConfig.preset(args.preset).to_dict()
    unknown = set(overrides) - set(base)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    base.update(overrides)
    return ModelConfig.from_dict(base).validate()


def _load(path: str):
    if not path:
        raise ConfigError("--manifest is required")
    return load_dataset(path)


def _out(args) -> str:
    return ensure_dir(args.out)


# commands ------------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.vocab:
        vocab = LabelVocabulary.preset(args.vocab)
    else:
        vocab = LabelVocabulary.generic(args.classes)
    plan = SignalPlan.parse(args.signal, false_rate=args.false_rate, second_label_rate=args.second_label_rate,
                            quadrant=args.quadrant)
    ds = synthesize_dataset(args.seed if args.seed is not None else 0, args.samples, vocab, plan,
                            kind=args.kind, frames_per_agent=args.frames_per_agent)
    out = _out(args)
    try:
        save_dataset(ds, os.path.join(out, "manifest.json"))
    except OSError as e:
        raise _Fail(EXIT_RUNTIME, f"cannot write dataset: {e}") from None
    print(json.dumps(ds.summary(), indent=1))
    return EXIT_OK


def cmd_train(args) -> int:
    ds = _load(args.manifest)
    cfg = build_config(args, ds.kind)
    if cfg.C != ds.C:
        cfg = cfg.replace(C=ds.C)
    out = _out(args)
    ckpt = os.path.join(out, "checkpoint")
    if os.path.exists(os.path.join(ckpt, "index.json")) and not args.force:
        raise CheckpointError(f"checkpoint exists at {ckpt}; pass --force to overwrite")
    _write(os.path.join(out, "config.json"), cfg.to_json() + "\n")
    log = None if args.quiet else (lambda r: print(f"epoch {r['epoch']} l_total {r['l_total']:.6f}", flush=True))
    result = train(ds, cfg, on_epoch=log)
    _write(os.path.join(out, "loss.csv"), result.loss_csv())
    save_checkpoint(result.model, ckpt, ds.vocabulary.names, force=args.force)
    print(f"checkpoint written to {ckpt}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model, names = load_checkpoint(args.checkpoint)
    ds = _load(args.manifest)
    if names is not None and tuple(names) != ds.vocabulary.names:
        if len(names) != ds.C:
            raise ValueError(f"checkpoint has C={len(names)} but the manifest has {ds.C} classes")
        raise ValueError("checkpoint and manifest class names differ")
    report = evaluate(model, ds, ds.vocabulary.names)
    out = _out(args)
    _write(os.path.join(out, "report.json"), report.to_json() + "\n")
    _write(os.path.join(out, "report.csv"), report.to_csv())
    _write(os.path.join(out, "config.json"), model.config.to_json() + "\n")
    print(f"mAP {report.map:.6f}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    ds = _load(args.manifest)
    if args.test_manifest:
        train_set, test_set = ds, load_dataset(args.test_manifest)
    else:
        train_set, test_set = split(ds, (1.0 - args.test_fraction, args.test_fraction), seed=args.split_seed)
    cfg = build_config(args, ds.kind)
    if cfg.C != ds.C:
        cfg = cfg.replace(C=ds.C)
    variants = _parse_variants(args.variants)
    for v in variants:
        cfg.replace(enabled_contexts=v).validate()
    out = _out(args)
    _write(os.path.join(out, "config.json"), cfg.to_json() + "\n")
    reports = []
    for v in variants:
        vcfg = cfg.replace(enabled_contexts=v)
        model = train(train_set, vcfg).model
        rep = evaluate(model, test_set, train_set.vocabulary.names)
        _write(os.path.join(out, f"report_{rep.variant}.json"), rep.to_json() + "\n")
        print(f"{rep.variant} mAP {rep.map:.6f}", flush=True)
        reports.append(rep)
    _write(os.path.join(out, "ablation.csv"), ablation_table(reports))
    return EXIT_OK


def _scores_json(ids, scores, names) -> str:
    return json.dumps({i: {n: round(float(v), 8) for n, v in zip(names, row)} for i, row in zip(ids, scores)},
                      indent=1) + "\n"


def cmd_inspect(args) -> int:
    model, names = load_checkpoint(args.checkpoint)
    ds = _load(args.manifest)
    try:
        idx = next(i for i, s in enumerate(ds.samples) if s.id == args.id)
    except StopIteration:
        raise DatasetError(f"unknown sample id {args.id!r}") from None
    names = names or list(ds.vocabulary.names)
    cfg = model.config
    # the inspection pass always renders both maps, whatever contexts the model uses
    data = prepare_inputs(ds.subset([idx]), cfg.replace(enabled_contexts=(1, 2, 3), context3_mode="depth"))
    out = _out(args)
    with no_grad():
        result = model.forward(data)
        if model.context2 is not None:
            att = result.attention.data[0]
        else:
            att = np.full((1, 1), 0.5)
    write_pgm(os.path.join(out, f"attention_{args.id}.pgm"), to_gray8(upsample_nearest(att, IMAGE_SIZE), 0.0, 1.0))
    write_pgm(os.path.join(out, f"depth_{args.id}.pgm"), to_gray8(ds.samples[idx].depth))
    _write(os.path.join(out, f"scores_{args.id}.json"), _scores_json([args.id], result.scores, names))
    print(f"wrote attention_{args.id}.pgm, depth_{args.id}.pgm, scores_{args.id}.json")
    return EXIT_OK


def cmd_predict(args) -> int:
    model, names = load_checkpoint(args.checkpoint)
    ds = _load(args.manifest)
    if model.config.C != ds.C:
        raise ValueError(f"checkpoint has C={model.config.C} but the manifest has {ds.C} classes")
    ids, scores, _ = predict_dataset(model, ds)
    out = _out(args)
    names = list(names or ds.vocabulary.names)
    doc = {i: {"scores": {n: round(float(v), 8) for n, v in zip(names, row)},
               "labels": [n for n, v in zip(names, row) if v >= LABEL_THRESHOLD]}
           for i, row in zip(ids, scores)}
    _write(os.path.join(out, "predictions.json"), json.dumps(doc, indent=1) + "\n")
    print(f"{len(ids)} predictions written")
    return EXIT_OK


# parser --------------------------------------------------------------------

def _model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", help="dataset manifest.json")
    p.add_argument("--preset", choices=("desk", "reference"), default="desk",
                   help="base config: desk (small widths, pooled inputs) or reference (full widths)")
    p.add_argument("--lr", type=float, help="Adam learning rate (default 1e-4)")
    p.add_argument("--epochs", type=int, help="training epochs (default 75)")
    p.add_argument("--batch-size", type=int, help="batch size (default 32 for images, 1 agent for video)")
    p.add_argument("--contexts", help="enabled contexts, e.g. 123 or 1,3 (default 123)")
    p.add_argument("--context3", choices=("depth", "gcn"), help="context-3 encoder (default depth)")
    p.add_argument("--fusion", choices=("multiplicative", "additive"), help="context-1 fusion (default multiplicative)")
    p.add_argument("--beta", type=float, help="fusion loss exponent (default 0.1)")
    p.add_argument("--mu", type=float, help="proximity graph distance threshold (default 3.0)")
    p.add_argument("--lambda1", type=float, help="weight of the fusion loss (default 1.0)")
    p.add_argument("--lambda2", type=float, help="weight of the classification loss (default 1.0)")
    p.add_argument("--dtype", choices=("float32", "float64"), help="parameter dtype (default float32)")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of config overrides (flags take precedence)")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--out", default=".", help="output directory (default: current directory)")

    parser = argparse.ArgumentParser(prog="ctxemo", description=__doc__.splitlines()[0],
                                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("synth", parents=[common], formatter_class=fmt, help="write a planted-signal dataset")
    p.add_argument("--samples", type=int, default=64, help="samples (agents for video)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--classes", type=int, default=4, help="generic vocabulary size")
    g.add_argument("--vocab", choices=("emotic", "groupwalk"), help="named vocabulary")
    p.add_argument("--signal", default="1,1,1", help="signal strengths for contexts 1,2,3")
    p.add_argument("--false-rate", type=float, default=0.35, help="probability of a cue for an inactive class")
    p.add_argument("--second-label-rate", type=float, default=0.3, help="probability of a second true label")
    p.add_argument("--quadrant", type=int, choices=(0, 1, 2, 3), help="confine image cues to one quadrant")
    p.add_argument("--kind", choices=("image", "video"), default="image")
    p.add_argument("--frames-per-agent", type=int, default=3, help="frames per agent for video datasets")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], formatter_class=fmt, help="train and write a checkpoint")
    _model_flags(p)
    p.add_argument("--force", action="store_true", help="overwrite an existing checkpoint")
    p.add_argument("--quiet", action="store_true", help="no per-epoch progress lines")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], formatter_class=fmt, help="average precision report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", parents=[common], formatter_class=fmt, help="train and compare context subsets")
    _model_flags(p)
    p.add_argument("--test-manifest", help="held-out manifest (default: split --manifest)")
    p.add_argument("--test-fraction", type=float, default=0.2, help="held-out fraction when splitting")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--variants", default=",".join("".join(map(str, v)) for v in DEFAULT_VARIANTS),
                   help="comma-separated context subsets")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("inspect", parents=[common], formatter_class=fmt, help="dump attention and depth PGMs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--id", required=True, help="sample id")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("predict", parents=[common], formatter_class=fmt, help="per-class scores as JSON")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _Fail as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except (ConfigError, DatasetError, SplitError, CheckpointError, ShapeError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, NonFiniteError, FloatingPointError, OSError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
