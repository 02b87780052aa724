"""Netflow CSV ingestion, cleaning, image/patch transforms, splits, synthetic data."""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np


class DataError(ValueError):
    pass


@dataclass
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.std


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: list[str]
    label_map: dict[str, int]
    image_shape: tuple[int, int] | None = None
    scaler: Scaler | None = None
    dropped_rows: int = 0

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {self.features.shape}")
        n, d = self.features.shape
        if n == 0 or d == 0:
            raise DataError("dataset is empty")
        if self.labels.shape != (n,):
            raise DataError(f"{n} rows but {self.labels.shape[0]} labels")
        if len(self.feature_names) != d:
            raise DataError(f"{d} columns but {len(self.feature_names)} feature names")
        if not np.isfinite(self.features).all():
            raise DataError("features contain non-finite values")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise DataError("label id outside the label map")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return len(self.label_map)

    def subset(self, idx) -> "Dataset":
        return replace(self, features=self.features[idx], labels=self.labels[idx], dropped_rows=0)


@dataclass
class LatentDataset:
    """Encoder output: one k-dimensional row per record, labels carried through."""

    latents: np.ndarray
    labels: np.ndarray

    @property
    def n(self) -> int:
        return self.latents.shape[0]

    @property
    def k(self) -> int:
        return self.latents.shape[1]


@dataclass(frozen=True)
class DatasetProfile:
    """Known corpus layout: feature count, image and patch geometry, label set."""

    name: str
    d: int
    image_shape: tuple[int, int]
    patch_shape: tuple[int, int]
    label_column: str
    labels: tuple[str, ...]
    drop_fields: tuple[str, ...] = ()


NBAIOT = DatasetProfile(
    name="nbaiot",
    d=115,
    image_shape=(5, 23),
    patch_shape=(5, 1),
    label_column="subcategory",
    labels=("normal", "scan", "junk", "combo", "tcp", "udp", "syn", "ack", "udpplain"),
)

CICIOT2022 = DatasetProfile(
    name="ciciot2022",
    d=84,
    image_shape=(6, 14),
    patch_shape=(2, 2),
    label_column="label",
    labels=("normal", "http_flood", "tcp_flood", "udp_flood", "brute_force"),
    drop_fields=("src_ip", "dst_ip", "pkt_no", "seq_id"),
)

PROFILES = {p.name: p for p in (NBAIOT, CICIOT2022)}


# ------------------------------------------------------------------ ingestion

def _parse(cell: str) -> float | None:
    cell = cell.strip()
    if not cell:
        return None
    try:
        v = float(cell)
    except ValueError:
        return None
    return v if np.isfinite(v) else None


def load_csv(path, label_column: str, drop=()) -> Dataset:
    """Read a header-first CSV; rows with a missing or unparseable cell are dropped.

    Columns listed in ``drop`` are discarded before numeric parsing, which is
    how address-like text columns are removed.  Labels are factorised in order
    of first appearance.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: no header row") from None
        if label_column not in header:
            raise DataError(f"{path}: label column {label_column!r} not in header")
        unknown = set(drop) - set(header)
        if unknown:
            raise DataError(f"{path}: cannot drop unknown columns {sorted(unknown)}")
        label_pos = header.index(label_column)
        keep = [i for i, h in enumerate(header) if i != label_pos and h not in set(drop)]
        names = [header[i] for i in keep]

        rows, raw_labels, dropped = [], [], 0
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            label = row[label_pos].strip()
            values = [_parse(row[i]) for i in keep]
            if not label or any(v is None for v in values):
                dropped += 1
                continue
            rows.append(values)
            raw_labels.append(label)

    if not rows:
        raise DataError(f"{path}: no usable rows after cleaning ({dropped} dropped)")
    label_map: dict[str, int] = {}
    for lab in raw_labels:
        label_map.setdefault(lab, len(label_map))
    labels = np.array([label_map[lab] for lab in raw_labels], dtype=np.int64)
    return Dataset(np.array(rows, dtype=np.float64).reshape(len(rows), len(names)), labels, names,
                   label_map, dropped_rows=dropped)


def clean(ds: Dataset) -> Dataset:
    """Drop rows holding non-finite values.  Idempotent."""
    ok = np.isfinite(ds.features).all(axis=1)
    if ok.all():
        return ds
    return replace(ds.subset(ok), dropped_rows=int((~ok).sum()))


def drop_fields(ds: Dataset, names) -> Dataset:
    names = list(names)
    unknown = [n for n in names if n not in ds.feature_names]
    if unknown:
        raise DataError(f"unknown fields: {unknown}")
    keep = [i for i, n in enumerate(ds.feature_names) if n not in set(names)]
    return replace(ds, features=ds.features[:, keep], feature_names=[ds.feature_names[i] for i in keep])


# ------------------------------------------------------------------ image transforms

def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


def pad_to_composite(d: int) -> int:
    if d < 2:
        raise DataError("need at least 2 features")
    return d + 1 if is_prime(d) else d


def pad_features(X: np.ndarray) -> np.ndarray:
    """Append a zero column when the feature count is prime (works on 1-D records too)."""
    X = np.asarray(X, dtype=np.float64)
    d = X.shape[-1]
    extra = pad_to_composite(d) - d
    if not extra:
        return X
    pad = [(0, 0)] * (X.ndim - 1) + [(0, extra)]
    return np.pad(X, pad)


def unpad(x: np.ndarray, d: int) -> np.ndarray:
    return np.asarray(x)[..., :d]


def factor_pair(d: int) -> tuple[int, int]:
    """(r, k) with r*k == d, r <= k, |r - k| minimal; N-BaIoT and CICIoT2022 keep their fixed layouts."""
    for prof in PROFILES.values():
        if prof.d == d:
            return prof.image_shape
    best = None
    for r in range(2, int(np.sqrt(d)) + 1):
        if d % r == 0:
            best = (r, d // r)
    if best is None:
        raise DataError(f"{d} has no non-trivial factorisation; pad it first")
    return best


@dataclass
class ImageInstance:
    pixels: np.ndarray  # (r, k, 1)

    @property
    def rows(self) -> int:
        return self.pixels.shape[0]

    @property
    def cols(self) -> int:
        return self.pixels.shape[1]

    def flatten(self) -> np.ndarray:
        return self.pixels.reshape(-1)


@dataclass
class PatchSequence:
    patches: np.ndarray  # (count, pr, pc, 1), row-major over the patch grid
    image_shape: tuple[int, int]

    @property
    def patch_rows(self) -> int:
        return self.patches.shape[1]

    @property
    def patch_cols(self) -> int:
        return self.patches.shape[2]

    def __len__(self):
        return self.patches.shape[0]

    def flat(self) -> np.ndarray:
        return self.patches.reshape(len(self), -1)


def reshape_to_image(record, r: int, k: int) -> ImageInstance:
    record = np.asarray(record, dtype=np.float64)
    if record.ndim != 1 or r * k != record.size:
        raise DataError(f"cannot reshape {record.size} values into {r}x{k}")
    return ImageInstance(record.reshape(r, k, 1).copy())


def _check_patch(r, k, pr, pc):
    if pr < 1 or pc < 1 or r % pr or k % pc:
        raise DataError(f"patch {pr}x{pc} does not tile a {r}x{k} image")


def extract_patches(img: ImageInstance, pr: int, pc: int) -> PatchSequence:
    r, k = img.rows, img.cols
    _check_patch(r, k, pr, pc)
    grid = img.pixels.reshape(r // pr, pr, k // pc, pc, 1).transpose(0, 2, 1, 3, 4)
    return PatchSequence(grid.reshape(-1, pr, pc, 1).copy(), (r, k))


def reassemble(seq: PatchSequence) -> ImageInstance:
    r, k = seq.image_shape
    pr, pc = seq.patch_rows, seq.patch_cols
    grid = seq.patches.reshape(r // pr, k // pc, pr, pc, 1).transpose(0, 2, 1, 3, 4)
    return ImageInstance(grid.reshape(r, k, 1).copy())


def patch_matrix(X: np.ndarray, image_shape: tuple[int, int], patch_shape: tuple[int, int]) -> np.ndarray:
    """Batched pad -> reshape -> patch: (n, d) rows to (n, num_patches, pr*pc)."""
    X = pad_features(X)
    r, k = image_shape
    pr, pc = patch_shape
    n = X.shape[0]
    if X.shape[1] != r * k:
        raise DataError(f"{X.shape[1]} features do not fill a {r}x{k} image")
    _check_patch(r, k, pr, pc)
    grid = X.reshape(n, r // pr, pr, k // pc, pc).transpose(0, 1, 3, 2, 4)
    return grid.reshape(n, (r // pr) * (k // pc), pr * pc)


def num_patches(image_shape, patch_shape) -> int:
    (r, k), (pr, pc) = image_shape, patch_shape
    _check_patch(r, k, pr, pc)
    return (r // pr) * (k // pc)


# ------------------------------------------------------------------ scaling / splits

def standardize(train: Dataset, test: Dataset | None = None):
    """z-score with train statistics; near-constant columns keep unit scale."""
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    scaler = Scaler(mean, std)
    tr = replace(train, features=scaler.transform(train.features), scaler=scaler)
    te = None if test is None else replace(test, features=scaler.transform(test.features), scaler=scaler)
    return tr, te, scaler


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.2
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie in (0, 1)")


def split(ds: Dataset, spec: SplitSpec):
    rng = np.random.default_rng(spec.seed)
    if spec.stratified:
        test_idx = []
        for c in range(ds.num_classes):
            members = np.flatnonzero(ds.labels == c)
            if members.size == 0:
                continue
            if members.size < 2:
                raise DataError(f"class {c} has a single record; cannot stratify")
            n_test = int(round(spec.test_fraction * members.size))
            n_test = min(max(n_test, 1), members.size - 1)
            test_idx.append(rng.permutation(members)[:n_test])
        test = np.sort(np.concatenate(test_idx))
    else:
        n_test = min(max(int(round(spec.test_fraction * ds.n)), 1), ds.n - 1)
        test = np.sort(rng.permutation(ds.n)[:n_test])
    mask = np.ones(ds.n, dtype=bool)
    mask[test] = False
    return ds.subset(np.flatnonzero(mask)), ds.subset(test)


# ------------------------------------------------------------------ synthetic data

def gen_synthetic(num_classes: int, d: int, per_class: int, separation: float, seed: int,
                  informative_rank: int | None = None) -> Dataset:
    """Gaussian classes whose means differ only inside a random ``informative_rank`` subspace.

    Each class mean is ``separation`` times a unit direction in that subspace;
    the directions are the most spread-out of several random draws.  Noise is
    isotropic unit variance in all ``d`` coordinates.
    """
    if d < 2:
        raise DataError("d must be >= 2")
    if separation < 0:
        raise DataError("separation must be >= 0")
    if num_classes < 1 or per_class < 1:
        raise DataError("need at least one class and one record per class")
    rank = min(d, informative_rank or num_classes)
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.standard_normal((d, rank)))
    best, best_gap = None, -1.0
    for _ in range(64):
        dirs = rng.standard_normal((num_classes, rank))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        diff = dirs[:, None, :] - dirs[None, :, :]
        dist = np.linalg.norm(diff, axis=-1) + np.eye(num_classes) * 10.0
        gap = dist.min() if num_classes > 1 else 1.0
        if gap > best_gap:
            best, best_gap = dirs, gap
    means = separation * best @ basis.T
    labels = np.repeat(np.arange(num_classes), per_class)
    X = means[labels] + rng.standard_normal((labels.size, d))
    names = [f"f{i}" for i in range(d)]
    label_map = {f"class{c}": c for c in range(num_classes)}
    return Dataset(X, labels, names, label_map)


# ------------------------------------------------------------------ persistence

DATASET_MAGIC = b"IOTLDS"
DATASET_VERSION = 1


def save_dataset(ds: Dataset, path) -> None:
    header = {
        "d": ds.d,
        "n": ds.n,
        "r": ds.image_shape[0] if ds.image_shape else None,
        "k": ds.image_shape[1] if ds.image_shape else None,
        "label_map": ds.label_map,
        "feature_names": ds.feature_names,
        "scaler": None if ds.scaler is None else {
            "mean": ds.scaler.mean.tolist(), "std": ds.scaler.std.tolist()},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<BI", DATASET_VERSION, len(blob)))
        fh.write(blob)
        fh.write(ds.features.astype("<f8").tobytes())
        fh.write(ds.labels.astype("<i8").tobytes())


def load_dataset(path) -> Dataset:
    raw = Path(path).read_bytes()
    if not raw.startswith(DATASET_MAGIC):
        raise DataError(f"{path}: not a dataset file")
    off = len(DATASET_MAGIC)
    try:
        version, hlen = struct.unpack_from("<BI", raw, off)
    except struct.error:
        raise DataError(f"{path}: truncated header") from None
    if version != DATASET_VERSION:
        raise DataError(f"{path}: unsupported dataset version {version}")
    off += 5
    header = json.loads(raw[off:off + hlen].decode("utf-8"))
    off += hlen
    n, d = header["n"], header["d"]
    if len(raw) != off + 8 * n * d + 8 * n:
        raise DataError(f"{path}: truncated or oversized payload")
    X = np.frombuffer(raw, dtype="<f8", count=n * d, offset=off).reshape(n, d).astype(np.float64)
    y = np.frombuffer(raw, dtype="<i8", count=n, offset=off + 8 * n * d).astype(np.int64)
    sc = header["scaler"]
    return Dataset(
        X, y, header["feature_names"], header["label_map"],
        image_shape=(header["r"], header["k"]) if header["r"] else None,
        scaler=None if sc is None else Scaler(np.array(sc["mean"]), np.array(sc["std"])),
    )
