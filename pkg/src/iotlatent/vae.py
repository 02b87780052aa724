"""Variational auto-encoder whose encoder mean serves as the latent projection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataprep import Dataset, LatentDataset
from .numcore import (
    ParamModel,
    Tensor,
    as_tensor,
    dense,
    dense_params,
    exp,
    fit,
    no_grad,
    reduce_mean,
    reduce_sum,
    relu,
)
from .numcore.tensor import NonFiniteError


@dataclass
class ElboBreakdown:
    total: Tensor
    recon: Tensor
    kl: Tensor

    def values(self) -> tuple[float, float, float]:
        return float(self.total.data), float(self.recon.data), float(self.kl.data)


class VaeModel(ParamModel):
    """Encoder d -> hidden... -> (mu, logvar); decoder mirrors it back to d."""

    kind = "vae"

    @property
    def input_dim(self) -> int:
        return self.config["input_dim"]

    @property
    def latent_dim(self) -> int:
        return self.config["latent_dim"]

    @property
    def hidden(self) -> tuple[int, ...]:
        return tuple(self.config["hidden"])


def vae_init(d: int, k: int, hidden=(64, 32), seed: int = 0) -> VaeModel:
    hidden = tuple(int(h) for h in hidden)
    if d < 1 or k < 1 or not hidden or min(hidden) < 1:
        raise ValueError("dimensions must be positive")
    if k >= d:
        raise ValueError(f"latent dim {k} must be smaller than input dim {d}")
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    widths = (d,) + hidden
    for i in range(len(hidden)):
        params.update(dense_params(rng, f"enc{i}", widths[i], widths[i + 1]))
    params.update(dense_params(rng, "mu", hidden[-1], k))
    params.update(dense_params(rng, "logvar", hidden[-1], k))
    back = (k,) + hidden[::-1]
    for i in range(len(hidden)):
        params.update(dense_params(rng, f"dec{i}", back[i], back[i + 1]))
    params.update(dense_params(rng, "out", hidden[0], d))
    config = {"input_dim": d, "latent_dim": k, "hidden": list(hidden), "seed": seed}
    return VaeModel(config, params)


def _encode(P, x: Tensor, depth: int):
    h = x
    for i in range(depth):
        h = relu(dense(h, P, f"enc{i}"))
    return dense(h, P, "mu"), dense(h, P, "logvar")


def _decode(P, z: Tensor, depth: int) -> Tensor:
    h = z
    for i in range(depth):
        h = relu(dense(h, P, f"dec{i}"))
    return dense(h, P, "out")


def _rows(x, width: int, what: str) -> np.ndarray:
    x = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != width:
        raise ValueError(f"{what}: expected width {width}, got shape {x.shape}")
    return x


def vae_encode(model: VaeModel, x):
    """(mu, logvar) arrays for a record or a batch of records."""
    x = _rows(x, model.input_dim, "vae_encode")
    with no_grad():
        mu, logvar = _encode(model.tensors(), Tensor(x), len(model.hidden))
    return mu.data, logvar.data


def vae_decode(model: VaeModel, z) -> np.ndarray:
    z = _rows(z, model.latent_dim, "vae_decode")
    with no_grad():
        out = _decode(model.tensors(), Tensor(z), len(model.hidden))
    return out.data


def reparameterize(mu, logvar, rng: np.random.Generator) -> Tensor:
    mu, logvar = as_tensor(mu), as_tensor(logvar)
    if mu.shape != logvar.shape:
        raise ValueError(f"mu {mu.shape} vs logvar {logvar.shape}")
    eps = rng.standard_normal(mu.shape)
    return mu + exp(logvar * 0.5) * eps


def elbo_loss(x, x_recon, mu, logvar) -> ElboBreakdown:
    """Negative ELBO as recon (batch-mean SSE) + closed-form KL to N(0, I)."""
    x, x_recon, mu, logvar = (as_tensor(t) for t in (x, x_recon, mu, logvar))
    if x.shape != x_recon.shape or mu.shape != logvar.shape:
        raise ValueError("elbo_loss: shape mismatch")
    diff = x - x_recon
    if diff.ndim == 1:
        diff, mu, logvar = diff.reshape(1, -1), mu.reshape(1, -1), logvar.reshape(1, -1)
    recon = reduce_mean(reduce_sum(diff * diff, axis=1))
    kl_rows = reduce_sum(1.0 + logvar - mu * mu - exp(logvar), axis=1) * -0.5
    kl = reduce_mean(kl_rows)
    return ElboBreakdown(recon + kl, recon, kl)


def vae_loss(P, x: np.ndarray, rng: np.random.Generator, depth: int) -> ElboBreakdown:
    xt = Tensor(x)
    mu, logvar = _encode(P, xt, depth)
    z = reparameterize(mu, logvar, rng)
    return elbo_loss(xt, _decode(P, z, depth), mu, logvar)


def vae_train(model: VaeModel, train: Dataset, epochs: int = 30, batch: int = 128,
              lr: float = 1e-3, seed: int = 0):
    """Minimise recon + KL with Adam; returns (model, per-epoch mean loss)."""
    X = train.features
    if X.shape[1] != model.input_dim:
        raise ValueError(f"dataset has {X.shape[1]} features, model expects {model.input_dim}")
    depth = len(model.hidden)

    def loss_fn(P, idx, rng):
        return vae_loss(P, X[idx], rng, depth).total

    try:
        curve = fit(model, loss_fn, X.shape[0], epochs, batch, lr, seed)
    except NonFiniteError as exc:
        raise NonFiniteError(f"VAE training aborted: {exc}") from exc
    return model, curve


def vae_project(model: VaeModel, dataset: Dataset) -> LatentDataset:
    mu, _ = vae_encode(model, dataset.features)
    return LatentDataset(mu, dataset.labels.copy())
