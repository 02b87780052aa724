"""Central finite-difference gradient verification."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import NonFiniteError, Tensor, backward, no_grad


def _wrap(point, requires_grad):
    if isinstance(point, dict):
        return {k: Tensor(v, requires_grad=requires_grad) for k, v in point.items()}
    return Tensor(point, requires_grad=requires_grad)


def _scalar(out) -> float:
    val = float(out.data) if isinstance(out, Tensor) else float(out)
    if not np.isfinite(val):
        raise NonFiniteError("function under check produced a non-finite value")
    return val


def grad_check(fn: Callable, point, eps: float = 1e-5) -> float:
    """Max over coordinates of |analytic - central difference| / max(1, |analytic|).

    ``point`` is an array or a dict of arrays; ``fn`` receives the matching
    Tensor / dict of Tensors and must return a scalar Tensor.  ``fn`` has to be
    pure: any randomness inside it must be re-seeded on every call.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    single = not isinstance(point, dict)
    base = {"x": np.array(point, dtype=np.float64)} if single else {
        k: np.array(v, dtype=np.float64) for k, v in point.items()
    }

    leaves = _wrap(base, True)
    loss = fn(leaves["x"] if single else leaves)
    _scalar(loss)
    backward(loss)
    analytic = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in leaves.items()}

    def evaluate(arrays):
        with no_grad():
            ts = _wrap(arrays, False)
            return _scalar(fn(ts["x"] if single else ts))

    worst = 0.0
    for name, arr in base.items():
        flat = arr.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = evaluate(base)
            flat[i] = orig - eps
            f_minus = evaluate(base)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            err = abs(a_flat[i] - numeric) / max(1.0, abs(a_flat[i]))
            worst = max(worst, err)
    return worst
