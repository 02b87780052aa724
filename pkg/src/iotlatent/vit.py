"""Vision-transformer encoder over record-derived patch sequences.

A learnable classification token is prepended to the embedded patches; its
final state is linearly projected to the k-dimensional latent.  A temporary
softmax head on top of the latent supplies the supervised training signal and
is ignored at projection time.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .dataprep import (
    Dataset,
    ImageInstance,
    LatentDataset,
    PatchSequence,
    num_patches,
    pad_to_composite,
    patch_matrix,
)
from .numcore import (
    ParamModel,
    Tensor,
    broadcast_to,
    concat,
    dense,
    dense_params,
    dropout,
    fit,
    layer_norm,
    matmul,
    no_grad,
    relu,
    softmax,
    softmax_cross_entropy,
)
from .numcore.tensor import NonFiniteError, ShapeError


@dataclass
class VitConfig:
    image_shape: tuple[int, int]
    patch_shape: tuple[int, int]
    latent_dim: int
    num_classes: int
    embed_dim: int = 32
    num_heads: int = 4
    depth: int = 2
    mlp_hidden: int = 64
    dropout: float = 0.1

    def __post_init__(self):
        self.image_shape = tuple(self.image_shape)
        self.patch_shape = tuple(self.patch_shape)
        if self.embed_dim % self.num_heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by {self.num_heads} heads")
        if min(self.latent_dim, self.num_classes, self.depth, self.mlp_hidden) < 1:
            raise ValueError("latent_dim, num_classes, depth and mlp_hidden must be positive")
        num_patches(self.image_shape, self.patch_shape)

    @property
    def num_patches(self) -> int:
        return num_patches(self.image_shape, self.patch_shape)

    @property
    def patch_dim(self) -> int:
        return self.patch_shape[0] * self.patch_shape[1]

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.num_heads


class VitModel(ParamModel):
    kind = "vit"

    @property
    def cfg(self) -> VitConfig:
        return VitConfig(**self.config["vit"])


def vit_init(cfg: VitConfig, seed: int = 0) -> VitModel:
    rng = np.random.default_rng(seed)
    E = cfg.embed_dim
    params = dense_params(rng, "patch", cfg.patch_dim, E)
    params["cls"] = rng.normal(0.0, 0.02, size=E)
    params["pos"] = rng.normal(0.0, 0.02, size=(cfg.num_patches + 1, E))
    for i in range(cfg.depth):
        b = f"block{i}"
        for ln in ("ln1", "ln2"):
            params[f"{b}.{ln}.g"] = np.ones(E)
            params[f"{b}.{ln}.b"] = np.zeros(E)
        for proj in ("q", "k", "v", "o"):
            params.update(dense_params(rng, f"{b}.{proj}", E, E))
        params.update(dense_params(rng, f"{b}.mlp1", E, cfg.mlp_hidden))
        params.update(dense_params(rng, f"{b}.mlp2", cfg.mlp_hidden, E))
    params.update(dense_params(rng, "latent", E, cfg.latent_dim))
    params.update(dense_params(rng, "head", cfg.latent_dim, cfg.num_classes))
    config = {"vit": asdict(cfg), "seed": seed}
    return VitModel(config, params)


# ------------------------------------------------------------------ graph pieces

def _embed(P, patches: Tensor) -> Tensor:
    return dense(patches, P, "patch")


def _tokenize(P, tokens: Tensor) -> Tensor:
    n, t, e = tokens.shape
    if t + 1 != P["pos"].shape[0]:
        raise ShapeError(f"{t} tokens but positional table has {P['pos'].shape[0]} rows")
    cls = broadcast_to(P["cls"].reshape(1, 1, e), (n, 1, e))
    return concat([cls, tokens], axis=1) + P["pos"]


def _mhsa(P, x: Tensor, block: str, heads: int, attn_sink=None) -> Tensor:
    n, t, e = x.shape
    dh = e // heads

    def split(h):
        return h.reshape(n, t, heads, dh).transpose(0, 2, 1, 3)

    q = split(dense(x, P, f"{block}.q"))
    k = split(dense(x, P, f"{block}.k"))
    v = split(dense(x, P, f"{block}.v"))
    scores = matmul(q, k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(dh))
    attn = softmax(scores, axis=-1)
    if attn_sink is not None:
        attn_sink.append(attn.data.copy())
    out = matmul(attn, v).transpose(0, 2, 1, 3).reshape(n, t, e)
    return dense(out, P, f"{block}.o")


def _block(P, x: Tensor, block: str, heads: int, rate: float, training: bool, rng, attn_sink=None) -> Tensor:
    h = layer_norm(x, P[f"{block}.ln1.g"], P[f"{block}.ln1.b"])
    x = x + dropout(_mhsa(P, h, block, heads, attn_sink), rate, rng, training)
    h = layer_norm(x, P[f"{block}.ln2.g"], P[f"{block}.ln2.b"])
    h = dense(relu(dense(h, P, f"{block}.mlp1")), P, f"{block}.mlp2")
    return x + dropout(h, rate, rng, training)


def encode_batch(P, patches: np.ndarray, cfg: VitConfig, training=False, rng=None, attn_sink=None):
    """(n, num_patches, patch_dim) -> (latent (n, k), logits (n, classes)) tensors."""
    if patches.ndim != 3 or patches.shape[1:] != (cfg.num_patches, cfg.patch_dim):
        raise ShapeError(f"expected (n, {cfg.num_patches}, {cfg.patch_dim}) patches, got {patches.shape}")
    x = _tokenize(P, _embed(P, Tensor(patches)))
    for i in range(cfg.depth):
        x = _block(P, x, f"block{i}", cfg.num_heads, cfg.dropout, training, rng, attn_sink)
    latent = dense(x[:, 0, :], P, "latent")
    return latent, dense(latent, P, "head")


# ------------------------------------------------------------------ public per-stage API

def _as_patch_array(patches, cfg: VitConfig) -> np.ndarray:
    if isinstance(patches, PatchSequence):
        if (patches.patch_rows, patches.patch_cols) != cfg.patch_shape:
            raise ShapeError(f"patches are {patches.patch_rows}x{patches.patch_cols}, model wants {cfg.patch_shape}")
        arr = patches.flat()
    else:
        arr = np.asarray(patches, dtype=np.float64)
    if arr.shape[-1] != cfg.patch_dim:
        raise ShapeError(f"patch width {arr.shape[-1]} != {cfg.patch_dim}")
    return arr


def patch_embed(patches, model: VitModel) -> np.ndarray:
    """token_i = W . flatten(patch_i) + b, for one sequence or a batch."""
    arr = _as_patch_array(patches, model.cfg)
    with no_grad():
        return _embed(model.tensors(), Tensor(arr)).data


def add_positional_and_token(tokens, model: VitModel) -> np.ndarray:
    tokens = np.asarray(tokens, dtype=np.float64)
    single = tokens.ndim == 2
    with no_grad():
        out = _tokenize(model.tensors(), Tensor(tokens[None] if single else tokens)).data
    return out[0] if single else out


def mhsa(sequence, model: VitModel, block: int = 0):
    """Self-attention sublayer of ``block``; returns (output, attention weights per head)."""
    seq = np.asarray(sequence, dtype=np.float64)
    single = seq.ndim == 2
    cfg = model.cfg
    if seq.shape[-1] != cfg.embed_dim:
        raise ShapeError(f"sequence width {seq.shape[-1]} != embed_dim {cfg.embed_dim}")
    sink: list[np.ndarray] = []
    with no_grad():
        out = _mhsa(model.tensors(), Tensor(seq[None] if single else seq), f"block{block}", cfg.num_heads, sink)
    attn = sink[0]
    return (out.data[0], attn[0]) if single else (out.data, attn)


def transformer_block(sequence, model: VitModel, block: int = 0, training: bool = False, rng=None) -> np.ndarray:
    seq = np.asarray(sequence, dtype=np.float64)
    single = seq.ndim == 2
    cfg = model.cfg
    if seq.shape[-1] != cfg.embed_dim:
        raise ShapeError(f"sequence width {seq.shape[-1]} != embed_dim {cfg.embed_dim}")
    with no_grad():
        out = _block(model.tensors(), Tensor(seq[None] if single else seq), f"block{block}",
                     cfg.num_heads, cfg.dropout, training, rng)
    return out.data[0] if single else out.data


def image_patches(X: np.ndarray, cfg: VitConfig) -> np.ndarray:
    return patch_matrix(np.atleast_2d(X), cfg.image_shape, cfg.patch_shape)


def vit_forward(model: VitModel, image, attn_sink=None):
    """Inference-mode (latent, logits) for one ImageInstance or raw record."""
    cfg = model.cfg
    if isinstance(image, ImageInstance):
        if (image.rows, image.cols) != cfg.image_shape:
            raise ShapeError(f"image {image.rows}x{image.cols} vs configured {cfg.image_shape}")
        record = image.flatten()
    else:
        record = np.asarray(image, dtype=np.float64).reshape(-1)
    patches = image_patches(record, cfg)
    with no_grad():
        latent, logits = encode_batch(model.tensors(), patches, cfg, attn_sink=attn_sink)
    return latent.data[0], logits.data[0]


def vit_train(model: VitModel, train: Dataset, epochs: int = 5, batch: int = 128, lr: float = 1e-3, seed: int = 0):
    """Supervised cross-entropy training of encoder + temporary head."""
    cfg = model.cfg
    patches = image_patches(train.features, cfg)
    labels = train.labels
    if labels.size and labels.max() >= cfg.num_classes:
        raise ValueError("dataset has more classes than the model head")

    def loss_fn(P, idx, rng):
        _, logits = encode_batch(P, patches[idx], cfg, training=True, rng=rng)
        return softmax_cross_entropy(logits, labels[idx])

    try:
        curve = fit(model, loss_fn, patches.shape[0], epochs, batch, lr, seed)
    except NonFiniteError as exc:
        raise NonFiniteError(f"ViT training aborted: {exc}") from exc
    return model, curve


def vit_project_array(model: VitModel, X: np.ndarray, batch: int = 512):
    cfg = model.cfg
    patches = image_patches(X, cfg)
    P = model.tensors()
    lat, logit = [], []
    with no_grad():
        for start in range(0, patches.shape[0], batch):
            latent, logits = encode_batch(P, patches[start:start + batch], cfg)
            lat.append(latent.data)
            logit.append(logits.data)
    return np.concatenate(lat), np.concatenate(logit)


def vit_project(model: VitModel, dataset: Dataset, batch: int = 512) -> LatentDataset:
    if pad_to_composite(dataset.d) != model.cfg.image_shape[0] * model.cfg.image_shape[1]:
        raise ShapeError(f"{dataset.d} features do not match image {model.cfg.image_shape}")
    latents, _ = vit_project_array(model, dataset.features, batch)
    return LatentDataset(latents, dataset.labels.copy())
