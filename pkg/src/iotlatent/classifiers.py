"""DNN / sRNN / LSTM / BLSTM / GRU classifiers trained on latent vectors.

All five share four hidden layers.  For the recurrent kinds the first hidden
layer is the recurrent layer, which reads the latent vector as k scalar
timesteps and hands its final state to three dense ReLU layers.  Dropout of
0.3 and 0.2 follows hidden layers three and four.
"""

from __future__ import annotations

import enum

import numpy as np

from .dataprep import LatentDataset
from .numcore import (
    ParamModel,
    Tensor,
    concat,
    dense,
    dense_params,
    dropout,
    fit,
    glorot_uniform,
    matmul,
    no_grad,
    relu,
    sigmoid,
    softmax,
    softmax_cross_entropy,
    tanh,
)
from .numcore.tensor import NonFiniteError, ShapeError


class ClassifierKind(str, enum.Enum):
    DNN = "DNN"
    LSTM = "LSTM"
    BLSTM = "BLSTM"
    GRU = "GRU"
    SRNN = "sRNN"

    @classmethod
    def parse(cls, name) -> "ClassifierKind":
        if isinstance(name, cls):
            return name
        for kind in cls:
            if kind.value.lower() == str(name).lower():
                return kind
        raise ValueError(f"unknown classifier kind {name!r}; choose from {[k.value for k in cls]}")


# Table row order.
CLASSIFIER_ORDER = (ClassifierKind.DNN, ClassifierKind.LSTM, ClassifierKind.BLSTM,
                    ClassifierKind.GRU, ClassifierKind.SRNN)

DEFAULT_WIDTHS = (64, 64, 32, 16)
DROPOUT_AFTER = {2: 0.3, 3: 0.2}  # zero-based hidden-layer index -> rate

_GATES = {ClassifierKind.SRNN: 1, ClassifierKind.GRU: 3, ClassifierKind.LSTM: 4, ClassifierKind.BLSTM: 4}


class ClassifierModel(ParamModel):
    kind = "classifier"

    @property
    def classifier_kind(self) -> ClassifierKind:
        return ClassifierKind.parse(self.config["kind"])

    @property
    def input_dim(self) -> int:
        return self.config["input_dim"]

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(self.config["widths"])

    @property
    def num_classes(self) -> int:
        return self.config["num_classes"]


def _recurrent_params(rng, prefix: str, gates: int, hidden: int) -> dict[str, np.ndarray]:
    return {
        f"{prefix}.W": glorot_uniform(rng, 1, gates * hidden),
        f"{prefix}.U": glorot_uniform(rng, hidden, gates * hidden),
        f"{prefix}.b": np.zeros(gates * hidden),
    }


def build_classifier(kind, k: int, num_classes: int, widths=DEFAULT_WIDTHS, seed: int = 0) -> ClassifierModel:
    kind = ClassifierKind.parse(kind)
    widths = tuple(int(w) for w in widths)
    if k < 1 or num_classes < 1:
        raise ValueError("k and num_classes must be positive")
    if len(widths) != 4 or min(widths) < 1:
        raise ValueError(f"need four positive hidden widths, got {widths}")
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    if kind is ClassifierKind.DNN:
        params.update(dense_params(rng, "h0", k, widths[0]))
        first_out = widths[0]
    else:
        params.update(_recurrent_params(rng, "rnn", _GATES[kind], widths[0]))
        first_out = widths[0]
        if kind is ClassifierKind.BLSTM:
            params.update(_recurrent_params(rng, "rnn_rev", _GATES[kind], widths[0]))
            first_out = 2 * widths[0]
    fan = (first_out,) + widths[1:]
    for i in range(1, 4):
        params.update(dense_params(rng, f"h{i}", fan[i - 1], fan[i]))
    params.update(dense_params(rng, "out", widths[3], num_classes))
    config = {"kind": kind.value, "input_dim": k, "num_classes": num_classes,
              "widths": list(widths), "seed": seed}
    return ClassifierModel(config, params)


def first_layer_width(model: ClassifierModel) -> int:
    return model.params["h1.W"].shape[0]


def latent_to_sequence(z) -> np.ndarray:
    """k-vector (or n x k batch) -> k timesteps of one feature: (k, 1) or (n, k, 1)."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 0 or z.shape[-1] < 1:
        raise ShapeError("latent vector must have at least one coordinate")
    return z[..., None]


# ------------------------------------------------------------------ recurrent cells

def _srnn_step(P, prefix, x, h, c, H):
    return tanh(matmul(x, P[f"{prefix}.W"]) + matmul(h, P[f"{prefix}.U"]) + P[f"{prefix}.b"]), None


def _lstm_step(P, prefix, x, h, c, H):
    a = matmul(x, P[f"{prefix}.W"]) + matmul(h, P[f"{prefix}.U"]) + P[f"{prefix}.b"]
    i = sigmoid(a[:, 0:H])
    f = sigmoid(a[:, H:2 * H])
    g = tanh(a[:, 2 * H:3 * H])
    o = sigmoid(a[:, 3 * H:4 * H])
    c = f * c + i * g
    return o * tanh(c), c


def _gru_step(P, prefix, x, h, c, H):
    W, U, b = P[f"{prefix}.W"], P[f"{prefix}.U"], P[f"{prefix}.b"]
    ax = matmul(x, W) + b
    ah = matmul(h, U[:, 0:2 * H])
    z = sigmoid(ax[:, 0:H] + ah[:, 0:H])
    r = sigmoid(ax[:, H:2 * H] + ah[:, H:2 * H])
    cand = tanh(ax[:, 2 * H:3 * H] + matmul(r * h, U[:, 2 * H:3 * H]))
    return (1.0 - z) * h + z * cand, None


_STEP = {
    ClassifierKind.SRNN: _srnn_step,
    ClassifierKind.LSTM: _lstm_step,
    ClassifierKind.BLSTM: _lstm_step,
    ClassifierKind.GRU: _gru_step,
}


def _run_cell(P, prefix: str, kind: ClassifierKind, seq: np.ndarray, H: int, reverse=False) -> Tensor:
    n, steps, _ = seq.shape
    h = Tensor(np.zeros((n, H)))
    c = Tensor(np.zeros((n, H))) if kind in (ClassifierKind.LSTM, ClassifierKind.BLSTM) else None
    step = _STEP[kind]
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        h, c = step(P, prefix, Tensor(seq[:, t, :]), h, c, H)
    return h


def _recurrent(P, kind: ClassifierKind, seq: np.ndarray, H: int) -> Tensor:
    h = _run_cell(P, "rnn", kind, seq, H)
    if kind is ClassifierKind.BLSTM:
        h = concat([h, _run_cell(P, "rnn_rev", kind, seq, H, reverse=True)], axis=1)
    return h


def recurrent_forward(kind, sequence, model: ClassifierModel) -> np.ndarray:
    """Final hidden state(s) of the recurrent layer for (k, 1) or (n, k, 1) input."""
    kind = ClassifierKind.parse(kind)
    if kind is ClassifierKind.DNN:
        raise ValueError("DNN has no recurrent layer")
    seq = np.asarray(sequence, dtype=np.float64)
    single = seq.ndim == 2
    if single:
        seq = seq[None]
    if seq.ndim != 3 or seq.shape[2] != 1:
        raise ShapeError(f"expected (n, steps, 1) sequence, got {seq.shape}")
    with no_grad():
        h = _recurrent(model.tensors(), kind, seq, model.widths[0]).data
    return h[0] if single else h


# ------------------------------------------------------------------ full stack

def logits_batch(P, model: ClassifierModel, Z: np.ndarray, training=False, rng=None) -> Tensor:
    kind = model.classifier_kind
    if Z.ndim != 2 or Z.shape[1] != model.input_dim:
        raise ShapeError(f"expected (n, {model.input_dim}) latents, got {Z.shape}")
    if kind is ClassifierKind.DNN:
        h = relu(dense(Tensor(Z), P, "h0"))
    else:
        h = _recurrent(P, kind, latent_to_sequence(Z), model.widths[0])
    for i in range(1, 4):
        h = relu(dense(h, P, f"h{i}"))
        if i in DROPOUT_AFTER:
            h = dropout(h, DROPOUT_AFTER[i], rng, training)
    return dense(h, P, "out")


def classifier_train(model: ClassifierModel, latents: LatentDataset, epochs: int = 20, batch: int = 128,
                     lr: float = 1e-3, seed: int = 0):
    Z, y = latents.latents, latents.labels
    if Z.shape[0] == 0:
        raise ValueError("cannot train on an empty latent set")
    if Z.shape[1] != model.input_dim:
        raise ShapeError(f"latent dim {Z.shape[1]} != model input {model.input_dim}")

    def loss_fn(P, idx, rng):
        return softmax_cross_entropy(logits_batch(P, model, Z[idx], training=True, rng=rng), y[idx])

    try:
        curve = fit(model, loss_fn, Z.shape[0], epochs, batch, lr, seed)
    except NonFiniteError as exc:
        raise NonFiniteError(f"{model.classifier_kind.value} training aborted: {exc}") from exc
    return model, curve


def classifier_predict(model: ClassifierModel, latents, batch: int = 1024):
    """(labels, probability rows); argmax ties go to the lowest class index."""
    Z = latents.latents if isinstance(latents, LatentDataset) else np.atleast_2d(np.asarray(latents, dtype=np.float64))
    if Z.shape[1] != model.input_dim:
        raise ShapeError(f"latent dim {Z.shape[1]} != model input {model.input_dim}")
    P = model.tensors()
    probs = []
    with no_grad():
        for start in range(0, Z.shape[0], batch):
            probs.append(softmax(logits_batch(P, model, Z[start:start + batch]), axis=1).data)
    prob = np.concatenate(probs) if probs else np.zeros((0, model.num_classes))
    return prob.argmax(axis=1), prob
