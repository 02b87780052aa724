"""Command-line entry point: ``iotlatent <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .. import dataprep
from ..classifiers import build_classifier, classifier_predict, classifier_train
from ..dataprep import Dataset, LatentDataset, SplitSpec, load_dataset, save_dataset
from ..evalkit import confusion, metrics
from ..numcore import NumcoreError
from ..vae import VaeModel, vae_project
from ..vit import VitModel, vit_project
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, dump_config, load_config
from .grid import PreparedData, derive_seed, run_grid, train_encoder
from .tables import emit_table, parse_csv

SUBCOMMANDS = ("preprocess", "gen-synth", "train-encoder", "project", "train-classifier", "evaluate", "grid", "emit")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (run.seed)")
    p.add_argument("--config", default=argparse.SUPPRESS, help="config file of 'section.key = value' lines")
    p.add_argument("--out", default=argparse.SUPPRESS, help="output directory (run.out)")
    p.add_argument("--set", action="append", default=argparse.SUPPRESS, metavar="KEY=VALUE",
                   help="override any config key; repeatable")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="iotlatent", parents=[common],
                                     description="Latent-space IoT botnet detection experiments.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("preprocess", parents=[common], help="CSV -> cleaned, split, standardised datasets")
    p.add_argument("--csv", required=True)
    p.add_argument("--label-column")
    p.add_argument("--drop", help="comma-separated columns to discard")
    p.add_argument("--profile", choices=sorted(dataprep.PROFILES))

    p = sub.add_parser("gen-synth", parents=[common], help="write a synthetic dataset")
    p.add_argument("--classes", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--per-class", type=int)
    p.add_argument("--separation", type=float)
    p.add_argument("--rank", type=int, help="rank of the informative subspace")
    p.add_argument("--csv", action="store_true", help="also write a CSV copy")

    p = sub.add_parser("train-encoder", parents=[common], help="train a VAE or ViT encoder")
    p.add_argument("--kind", choices=("vae", "vit"), required=True)
    p.add_argument("--latent-dim", type=int, required=True)
    p.add_argument("--train", required=True, help="dataset file from preprocess/gen-synth")

    p = sub.add_parser("project", parents=[common], help="project a dataset with a trained encoder")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--name", help="output file stem")

    p = sub.add_parser("train-classifier", parents=[common], help="train one classifier on latents")
    p.add_argument("--kind", required=True, help="DNN, LSTM, BLSTM, GRU or sRNN")
    p.add_argument("--train", required=True, help="latent dataset file from project")

    p = sub.add_parser("evaluate", parents=[common], help="score a classifier checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)

    sub.add_parser("grid", parents=[common], help="run the full encoder x latent-dim x classifier grid")

    p = sub.add_parser("emit", parents=[common], help="render results.csv as tables")
    p.add_argument("--results", required=True)
    p.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    return parser


def _config(args):
    overrides = list(getattr(args, "set", []) or [])
    if hasattr(args, "seed"):
        overrides.append(f"run.seed={args.seed}")
    if hasattr(args, "out"):
        overrides.append(f"run.out={args.out}")
    return load_config(getattr(args, "config", None), overrides)


def _out(cfg) -> Path:
    out = Path(cfg.run.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _latent_file(lat: LatentDataset, label_map: dict) -> Dataset:
    names = [f"z{i}" for i in range(lat.k)]
    return Dataset(lat.latents, lat.labels, names, label_map)


def cmd_preprocess(args, cfg) -> int:
    profile = dataprep.PROFILES.get(args.profile or cfg.data.profile.lower())
    label_column = args.label_column or (profile.label_column if profile else cfg.data.label_column)
    drop = tuple(args.drop.split(",")) if args.drop else (cfg.data.drop_fields or (profile.drop_fields if profile else ()))
    ds = dataprep.load_csv(args.csv, label_column, drop=drop)
    spec = SplitSpec(cfg.split.test_fraction, derive_seed(cfg.run.seed, "split"), cfg.split.stratified)
    train, test = dataprep.split(ds, spec)
    train, test, _ = dataprep.standardize(train, test)
    d_img = dataprep.pad_to_composite(ds.d)
    shape = cfg.data.image_shape or (profile.image_shape if profile and profile.d == ds.d else dataprep.factor_pair(d_img))
    train.image_shape = test.image_shape = shape
    out = _out(cfg)
    save_dataset(train, out / "train.ds")
    save_dataset(test, out / "test.ds")
    print(f"rows kept {ds.n}, dropped {ds.dropped_rows}; d={ds.d}, classes={ds.num_classes}, image {shape[0]}x{shape[1]}")
    print(f"wrote {out / 'train.ds'} ({train.n} rows) and {out / 'test.ds'} ({test.n} rows)")
    return 0


def cmd_gen_synth(args, cfg) -> int:
    sc = cfg.synthetic
    ds = dataprep.gen_synthetic(
        args.classes or sc.classes, args.dim or sc.dim, args.per_class or sc.per_class,
        sc.separation if args.separation is None else args.separation,
        seed=cfg.run.seed, informative_rank=args.rank or sc.informative_rank)
    out = _out(cfg)
    save_dataset(ds, out / "synthetic.ds")
    if args.csv:
        with open(out / "synthetic.csv", "w", encoding="utf-8") as fh:
            fh.write(",".join(ds.feature_names + ["label"]) + "\n")
            inv = {v: k for k, v in ds.label_map.items()}
            for row, lab in zip(ds.features, ds.labels):
                fh.write(",".join(repr(float(v)) for v in row) + f",{inv[int(lab)]}\n")
    print(f"wrote {out / 'synthetic.ds'}: {ds.n} rows x {ds.d} features, {ds.num_classes} classes")
    return 0


def cmd_train_encoder(args, cfg) -> int:
    train = load_dataset(args.train)
    if train.scaler is None:
        train, _, _ = dataprep.standardize(train)
    shape = train.image_shape or cfg.data.image_shape or dataprep.factor_pair(dataprep.pad_to_composite(train.d))
    patch = cfg.data.patch_shape
    if patch is None:
        prof = next((p for p in dataprep.PROFILES.values() if p.image_shape == tuple(shape)), None)
        patch = prof.patch_shape if prof else (shape[0], 1)
    data = PreparedData(train, train, cfg.data.name, tuple(shape), tuple(patch))
    seed = derive_seed(cfg.run.seed, "cli", args.kind, args.latent_dim)
    model, curve = train_encoder(args.kind, args.latent_dim, data, cfg, seed)
    path = _out(cfg) / f"{args.kind}-{args.latent_dim}.ckpt"
    save_checkpoint(model, path)
    print(f"trained {args.kind} k={args.latent_dim}; loss {curve[0]:.4f} -> {curve[-1]:.4f}; wrote {path}")
    return 0


def cmd_project(args, cfg) -> int:
    model = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data)
    if isinstance(model, VaeModel):
        lat = vae_project(model, ds)
    elif isinstance(model, VitModel):
        lat = vit_project(model, ds)
    else:
        raise CheckpointError("project needs a vae or vit checkpoint")
    stem = args.name or f"{Path(args.data).stem}-{model.kind}-{lat.k}"
    path = _out(cfg) / f"{stem}.latent.ds"
    save_dataset(_latent_file(lat, ds.label_map), path)
    print(f"wrote {path}: {lat.n} x {lat.k}")
    return 0


def cmd_train_classifier(args, cfg) -> int:
    ds = load_dataset(args.train)
    lat = LatentDataset(ds.features, ds.labels)
    cc = cfg.classifier
    seed = derive_seed(cfg.run.seed, "cli", args.kind, lat.k)
    model = build_classifier(args.kind, lat.k, ds.num_classes, cc.widths, seed=seed)
    model, curve = classifier_train(model, lat, cc.epochs, cc.batch, cc.lr, seed=seed)
    path = _out(cfg) / f"{model.classifier_kind.value}-{lat.k}.ckpt"
    save_checkpoint(model, path)
    print(f"trained {model.classifier_kind.value}; loss {curve[0]:.4f} -> {curve[-1]:.4f}; wrote {path}")
    return 0


def cmd_evaluate(args, cfg) -> int:
    model = load_checkpoint(args.checkpoint, expected_kind="classifier")
    ds = load_dataset(args.data)
    pred, _ = classifier_predict(model, LatentDataset(ds.features, ds.labels))
    cm = confusion(ds.labels, pred, model.num_classes)
    quad = metrics(cm)
    record = {"format_version": 1, "checkpoint": str(args.checkpoint), "data": str(args.data),
              "acc": quad.acc, "prc": quad.prc, "rec": quad.rec, "f1": quad.f1, "confusion": cm.tolist()}
    path = _out(cfg) / "evaluation.json"
    path.write_text(json.dumps(record, indent=1) + "\n", encoding="utf-8")
    print(f"Acc {quad.acc:.2f}  Prc {quad.prc:.2f}  Rec {quad.rec:.2f}  F1 {quad.f1:.2f}")
    return 0


def cmd_grid(args, cfg) -> int:
    out = _out(cfg)
    (out / "config.used").write_text(dump_config(cfg), encoding="utf-8")
    table = run_grid(cfg, out)
    print(emit_table(table, "markdown"))
    failed = sum(1 for c in table.cells.values() if c.status != "ok")
    print(f"{len(table)} cells, {failed} failed; wrote {out / 'results.csv'} and {out / 'results.md'}")
    return 0


def cmd_emit(args, cfg) -> int:
    table = parse_csv(Path(args.results).read_text(encoding="utf-8"))
    sys.stdout.write(emit_table(table, args.format))
    return 0


HANDLERS = {
    "preprocess": cmd_preprocess,
    "gen-synth": cmd_gen_synth,
    "train-encoder": cmd_train_encoder,
    "project": cmd_project,
    "train-classifier": cmd_train_classifier,
    "evaluate": cmd_evaluate,
    "grid": cmd_grid,
    "emit": cmd_emit,
}


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return HANDLERS[args.command](args, cfg)
    except (ConfigError, CheckpointError, dataprep.DataError, NumcoreError, FileNotFoundError, ValueError) as exc:
        print(f"iotlatent: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
