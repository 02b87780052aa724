"""Encoder x latent-dim x classifier experiment grid."""

from __future__ import annotations

import hashlib
import json
import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..classifiers import ClassifierKind, build_classifier, classifier_predict, classifier_train
from ..dataprep import (
    PROFILES,
    Dataset,
    LatentDataset,
    SplitSpec,
    factor_pair,
    gen_synthetic,
    load_csv,
    pad_to_composite,
    split,
    standardize,
)
from ..evalkit import MetricQuad, evaluate
from ..numcore import NonFiniteError
from ..vae import vae_init, vae_project, vae_train
from ..vit import VitConfig, vit_init, vit_project, vit_train
from .checkpoint import save_checkpoint
from .config import ExperimentConfig
from .tables import CellResult, ResultTable, emit_csv, emit_markdown

log = logging.getLogger(__name__)

CELL_RECORD_VERSION = 1


def derive_seed(master: int, *coords) -> int:
    """Seed for a grid coordinate; independent of evaluation order."""
    tag = zlib.crc32("|".join(str(c) for c in coords).encode("utf-8"))
    ss = np.random.SeedSequence([int(master) & 0xFFFFFFFF, tag])
    return int(ss.generate_state(1)[0])


@dataclass
class PreparedData:
    train: Dataset
    test: Dataset
    name: str
    image_shape: tuple[int, int]
    patch_shape: tuple[int, int]


def prepare_data(cfg: ExperimentConfig) -> PreparedData:
    dc = cfg.data
    profile = PROFILES.get(dc.profile.lower())
    master = cfg.run.seed
    if dc.source == "synthetic":
        sc = cfg.synthetic
        full = gen_synthetic(sc.classes, sc.dim, sc.per_class, sc.separation,
                             seed=derive_seed(master, "synthetic"), informative_rank=sc.informative_rank)
    else:
        label_column = profile.label_column if profile and dc.label_column == "label" else dc.label_column
        drop = dc.drop_fields or (profile.drop_fields if profile else ())
        full = load_csv(dc.source, label_column, drop=drop)
        log.info("loaded %s: %d rows, %d features, %d dropped", dc.source, full.n, full.d, full.dropped_rows)
    train, test = split(full, SplitSpec(cfg.split.test_fraction, derive_seed(master, "split"), cfg.split.stratified))
    train, test, _ = standardize(train, test)

    d_img = pad_to_composite(full.d)
    image_shape = dc.image_shape or (profile.image_shape if profile and profile.d == full.d else factor_pair(d_img))
    if image_shape[0] * image_shape[1] != d_img:
        raise ValueError(f"image shape {image_shape} does not hold {d_img} features")
    patch_shape = dc.patch_shape or (profile.patch_shape if profile and profile.d == full.d else (image_shape[0], 1))
    train.image_shape = test.image_shape = image_shape
    return PreparedData(train, test, dc.name, tuple(image_shape), tuple(patch_shape))


def train_encoder(kind: str, k: int, data: PreparedData, cfg: ExperimentConfig, seed: int):
    if kind == "vae":
        vc = cfg.vae
        model = vae_init(data.train.d, k, vc.hidden, seed=seed)
        return vae_train(model, data.train, vc.epochs, vc.batch, vc.lr, seed=seed)
    vc = cfg.vit
    vcfg = VitConfig(data.image_shape, data.patch_shape, k, data.train.num_classes,
                     vc.embed_dim, vc.num_heads, vc.depth, vc.mlp_hidden, vc.dropout)
    model = vit_init(vcfg, seed=seed)
    return vit_train(model, data.train, vc.epochs, vc.batch, vc.lr, seed=seed)


def project(kind: str, model, ds: Dataset) -> LatentDataset:
    return vae_project(model, ds) if kind == "vae" else vit_project(model, ds)


def projection_hash(*latents: LatentDataset) -> str:
    h = hashlib.sha256()
    for lat in latents:
        h.update(np.ascontiguousarray(lat.latents, dtype="<f8").tobytes())
    return h.hexdigest()


def _write_record(out: Path | None, record: dict) -> None:
    if out is None:
        return
    name = f"cell-{record['encoder']}-{record['latent_dim']}-{record['classifier']}-r{record['repeat']}.json"
    (out / name).write_text(json.dumps(record, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def run_group(cfg: ExperimentConfig, data: PreparedData, repeat: int, encoder: str, k: int, out: Path | None):
    """Train one encoder, project once, then train and score every classifier on that projection."""
    master = cfg.run.seed
    enc_seed = derive_seed(master, repeat, encoder, k)
    results = []
    base = {"format_version": CELL_RECORD_VERSION, "encoder": encoder, "dataset": data.name,
            "latent_dim": k, "repeat": repeat, "encoder_seed": enc_seed}
    try:
        model, enc_curve = train_encoder(encoder, k, data, cfg, enc_seed)
        z_train = project(encoder, model, data.train)
        z_test = project(encoder, model, data.test)
        digest = projection_hash(z_train, z_test)
        if out is not None:
            save_checkpoint(model, out / "checkpoints" / f"{encoder}-{k}-r{repeat}.ckpt")
    except NonFiniteError as exc:
        log.warning("encoder %s k=%d failed: %s", encoder, k, exc)
        for clf in cfg.grid.classifiers:
            kind = ClassifierKind.parse(clf)
            rec = dict(base, classifier=kind.value, status="failed", error=str(exc))
            _write_record(out, rec)
            results.append((kind.value, CellResult(None, "failed")))
        return results

    for clf in cfg.grid.classifiers:
        kind = ClassifierKind.parse(clf)
        clf_seed = derive_seed(master, repeat, encoder, k, kind.value)
        rec = dict(base, classifier=kind.value, classifier_seed=clf_seed, projection_sha256=digest,
                   encoder_loss_curve=enc_curve)
        cc = cfg.classifier
        try:
            cm = build_classifier(kind, k, data.train.num_classes, cc.widths, seed=clf_seed)
            cm, curve = classifier_train(cm, z_train, cc.epochs, cc.batch, cc.lr, seed=clf_seed)
            pred, _ = classifier_predict(cm, z_test)
            quad = evaluate(z_test.labels, pred, data.train.num_classes)
        except NonFiniteError as exc:
            log.warning("cell %s/%d/%s failed: %s", encoder, k, kind.value, exc)
            rec.update(status="failed", error=str(exc))
            _write_record(out, rec)
            results.append((kind.value, CellResult(None, "failed", digest)))
            continue
        if out is not None:
            save_checkpoint(cm, out / "checkpoints" / f"{encoder}-{k}-{kind.value}-r{repeat}.ckpt")
        rec.update(status="ok", loss_curve=curve, acc=quad.acc, prc=quad.prc, rec=quad.rec, f1=quad.f1)
        _write_record(out, rec)
        log.info("%s k=%d %s: acc=%.2f f1=%.3f", encoder, k, kind.value, quad.acc, quad.f1)
        results.append((kind.value, CellResult(quad, "ok", digest)))
    return results


def _mean_cell(cells: list[CellResult]) -> CellResult:
    if any(c.metrics is None for c in cells):
        return CellResult(None, "failed", cells[0].projection_hash)
    arr = np.array([c.metrics.as_tuple() for c in cells])
    return CellResult(MetricQuad(*map(float, arr.mean(axis=0))), "ok", cells[0].projection_hash)


def run_grid(cfg: ExperimentConfig, out=None, data: PreparedData | None = None) -> ResultTable:
    cfg.validate()
    out = Path(out) if out is not None else None
    if out is not None:
        (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    data = data or prepare_data(cfg)
    encoders = [e.lower() for e in cfg.grid.encoders]
    for k in cfg.grid.latent_dims:
        if k >= data.train.d:
            raise ValueError(f"latent dim {k} must be below the feature count {data.train.d}")
    jobs = [(r, e, k) for r in range(cfg.grid.repeats) for e in encoders for k in cfg.grid.latent_dims]

    if cfg.grid.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.grid.workers) as pool:
            futures = [pool.submit(run_group, cfg, data, r, e, k, out) for r, e, k in jobs]
            outcomes = [f.result() for f in futures]
    else:
        outcomes = [run_group(cfg, data, r, e, k, out) for r, e, k in jobs]

    collected: dict[tuple, list[CellResult]] = {}
    for (r, e, k), cells in zip(jobs, outcomes):
        for clf, cell in cells:
            collected.setdefault((e, k, clf), []).append(cell)
    table = ResultTable()
    for (e, k, clf), cells in collected.items():
        table.add(e, data.name, k, clf, _mean_cell(cells))

    if out is not None:
        (out / "results.csv").write_text(emit_csv(table), encoding="utf-8")
        (out / "results.md").write_text(emit_markdown(table), encoding="utf-8")
    return table
