"""Parameter containers and the shared minibatch training loop."""

from __future__ import annotations

import json
from typing import Callable

import numpy as np

from .init import glorot_uniform
from .optim import AdamState, adam_step
from .tensor import NonFiniteError, Tensor, backward, matmul


class ParamModel:
    """Named float64 parameter arrays plus a JSON-able config echo.

    ``kind`` tags the model family for checkpoints.
    """

    kind = "abstract"

    def __init__(self, config: dict, params: dict[str, np.ndarray]):
        # canonical JSON form, so a reloaded checkpoint compares equal
        self.config = json.loads(json.dumps(config))
        self.params = params

    def tensors(self, requires_grad: bool = False) -> dict[str, Tensor]:
        return {k: Tensor(v, requires_grad=requires_grad) for k, v in self.params.items()}

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def __eq__(self, other):
        if type(self) is not type(other) or self.config != other.config:
            return False
        if self.params.keys() != other.params.keys():
            return False
        return all(np.array_equal(self.params[k], other.params[k]) for k in self.params)


def dense_params(rng: np.random.Generator, prefix: str, fan_in: int, fan_out: int) -> dict[str, np.ndarray]:
    return {
        f"{prefix}.W": glorot_uniform(rng, fan_in, fan_out),
        f"{prefix}.b": np.zeros(fan_out),
    }


def dense(x: Tensor, P: dict[str, Tensor], prefix: str) -> Tensor:
    return matmul(x, P[f"{prefix}.W"]) + P[f"{prefix}.b"]


def minibatches(n: int, batch: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch):
        yield order[start:start + batch]


def fit(
    model: ParamModel,
    loss_fn: Callable[[dict[str, Tensor], np.ndarray, np.random.Generator], Tensor],
    n: int,
    epochs: int,
    batch: int,
    lr: float,
    seed: int,
) -> list[float]:
    """Shuffle, build a fresh graph per batch, step Adam.  Returns per-epoch mean loss.

    ``loss_fn(P, idx, rng)`` gets the parameter tensors, the batch row indices
    and the run's generator (for dropout / sampling).
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if n < 1:
        raise ValueError("cannot train on an empty dataset")
    if batch < 1:
        raise ValueError("batch must be >= 1")
    rng = np.random.default_rng(seed)
    state = AdamState.for_params(model.params, lr=lr)
    curve = []
    for epoch in range(epochs):
        total, seen = 0.0, 0
        for idx in minibatches(n, batch, rng):
            P = model.tensors(requires_grad=True)
            loss = loss_fn(P, idx, rng)
            value = float(loss.data)
            if not np.isfinite(value):
                raise NonFiniteError(f"non-finite loss at epoch {epoch + 1}")
            backward(loss)
            grads = {k: t.grad for k, t in P.items() if t.grad is not None}
            adam_step(model.params, grads, state)
            total += value * len(idx)
            seen += len(idx)
        curve.append(total / seen)
    return curve
