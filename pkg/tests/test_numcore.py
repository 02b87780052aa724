import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from iotlatent import numcore as nc
from iotlatent.numcore import Tensor


def naive_matmul(a, b):
    n, m = a.shape
    m2, p = b.shape
    assert m == m2
    out = np.zeros((n, p))
    for i in range(n):
        for j in range(p):
            s = 0.0
            for t in range(m):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def test_softmax_of_constant_is_uniform():
    for c in (-3.0, 0.0, 7.5):
        out = nc.forward_op("softmax", Tensor([c, c, c]), axis=0).data
        np.testing.assert_allclose(out, [1 / 3] * 3, atol=1e-15)


def test_relu_definition():
    np.testing.assert_array_equal(nc.relu(Tensor([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])


def test_matmul_against_triple_loop():
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal((5, 23)), rng.standard_normal((23, 8))
    out = nc.forward_op("matmul", Tensor(a), Tensor(b))
    assert out.shape == (5, 8)
    np.testing.assert_allclose(out.data, naive_matmul(a, b), rtol=1e-12, atol=1e-12)


def test_product_rule():
    x, y = Tensor(3.0, requires_grad=True), Tensor(4.0, requires_grad=True)
    nc.backward(x * y)
    assert x.grad == 4.0 and y.grad == 3.0


def test_cross_entropy_gradient_closed_form():
    rng = np.random.default_rng(1)
    logits = Tensor(rng.standard_normal((1, 6)), requires_grad=True)
    nc.backward(nc.softmax_cross_entropy(logits, [2]))
    s = np.exp(logits.data) / np.exp(logits.data).sum()
    expected = s.copy()
    expected[0, 2] -= 1.0
    np.testing.assert_allclose(logits.grad, expected, atol=1e-14)


# one entry per op kind: (name, input builder, forward)
def _pos(rng, shape):
    return np.abs(rng.standard_normal(shape)) + 0.5


OP_CASES = {
    "matmul": (lambda r: {"a": r.standard_normal((3, 4)), "b": r.standard_normal((4, 2))},
               lambda t: nc.matmul(t["a"], t["b"])),
    "batched-matmul": (lambda r: {"a": r.standard_normal((2, 3, 4)), "b": r.standard_normal((2, 4, 3))},
                       lambda t: nc.matmul(t["a"], t["b"])),
    "add": (lambda r: {"a": r.standard_normal((3, 4)), "b": r.standard_normal(4)},
            lambda t: t["a"] + t["b"]),
    "sub": (lambda r: {"a": r.standard_normal((3, 1)), "b": r.standard_normal((3, 4))},
            lambda t: t["a"] - t["b"]),
    "mul": (lambda r: {"a": r.standard_normal((3, 4)), "b": r.standard_normal((1, 4))},
            lambda t: t["a"] * t["b"]),
    "relu": (lambda r: {"a": r.standard_normal((4, 5))}, lambda t: nc.relu(t["a"])),
    "tanh": (lambda r: {"a": r.standard_normal((4, 5))}, lambda t: nc.tanh(t["a"])),
    "sigmoid": (lambda r: {"a": 3 * r.standard_normal((4, 5))}, lambda t: nc.sigmoid(t["a"])),
    "exp": (lambda r: {"a": r.standard_normal((4, 5))}, lambda t: nc.exp(t["a"])),
    "log": (lambda r: {"a": _pos(r, (4, 5))}, lambda t: nc.log(t["a"])),
    "softmax": (lambda r: {"a": r.standard_normal((3, 5))}, lambda t: nc.softmax(t["a"], axis=1)),
    "softmax-axis0": (lambda r: {"a": r.standard_normal((3, 5))}, lambda t: nc.softmax(t["a"], axis=0)),
    "log-softmax": (lambda r: {"a": r.standard_normal((3, 5))}, lambda t: nc.log_softmax(t["a"], axis=-1)),
    "layer-norm": (lambda r: {"a": r.standard_normal((3, 6)), "g": r.standard_normal(6), "b": r.standard_normal(6)},
                   lambda t: nc.layer_norm(t["a"], t["g"], t["b"])),
    "layer-norm-axis0": (lambda r: {"a": r.standard_normal((5, 3))}, lambda t: nc.layer_norm(t["a"], axis=0)),
    "reshape": (lambda r: {"a": r.standard_normal((3, 4))}, lambda t: nc.reshape(t["a"], (2, 6))),
    "transpose": (lambda r: {"a": r.standard_normal((2, 3, 4))}, lambda t: nc.transpose(t["a"], (2, 0, 1))),
    "slice": (lambda r: {"a": r.standard_normal((4, 5))}, lambda t: t["a"][1:3, ::2]),
    "fancy-slice": (lambda r: {"a": r.standard_normal((4, 5))}, lambda t: t["a"][[0, 2, 2], :]),
    "concat": (lambda r: {"a": r.standard_normal((2, 3)), "b": r.standard_normal((2, 2))},
               lambda t: nc.concat([t["a"], t["b"]], axis=1)),
    "reduce-sum": (lambda r: {"a": r.standard_normal((3, 4))}, lambda t: nc.reduce_sum(t["a"], axis=0)),
    "reduce-mean": (lambda r: {"a": r.standard_normal((3, 4))}, lambda t: nc.reduce_mean(t["a"], axis=1, keepdims=True)),
    "broadcast": (lambda r: {"a": r.standard_normal((1, 4))}, lambda t: nc.broadcast_to(t["a"], (3, 4))),
    "dropout": (lambda r: {"a": r.standard_normal((4, 6))},
                lambda t: nc.dropout(t["a"], 0.4, np.random.default_rng(99), training=True)),
    "softmax-xent": (lambda r: {"a": r.standard_normal((4, 3))},
                     lambda t: nc.softmax_cross_entropy(t["a"], [0, 2, 1, 2])),
}


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_op_gradients_match_finite_differences(name):
    build, forward = OP_CASES[name]
    for seed in range(20):
        rng = np.random.default_rng(seed)
        point = build(rng)
        probe = forward({k: Tensor(v) for k, v in point.items()})
        weights = rng.standard_normal(probe.shape)

        def fn(t):
            return nc.reduce_sum(forward(t) * weights)

        assert nc.grad_check(fn, point) < 1e-4, (name, seed)


def test_forward_op_errors():
    with pytest.raises(nc.ShapeError):
        nc.forward_op("matmul", Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(nc.ShapeError):
        nc.forward_op("add", Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))
    with pytest.raises(nc.UnknownOpError):
        nc.forward_op("conv2d", Tensor(1.0))
    with pytest.raises(nc.NonFiniteError):
        Tensor([1.0, np.nan])
    with pytest.raises(nc.NonFiniteError):
        nc.log(Tensor([0.0, 1.0]))


def test_backward_errors():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(nc.ShapeError):
        nc.backward(x * 2.0)
    loss = nc.reduce_sum(x * x)
    nc.backward(loss)
    with pytest.raises(nc.GraphConsumedError):
        nc.backward(loss)


def test_gradients_reset_between_passes():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    nc.backward(nc.reduce_sum(x * 3.0))
    nc.backward(nc.reduce_sum(x * 3.0))
    np.testing.assert_array_equal(x.grad, [3.0, 3.0])


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 7)),
              elements=st.floats(-50, 50, allow_nan=False)))
def test_softmax_rows_are_distributions(x):
    s = nc.softmax(Tensor(x), axis=1).data
    assert (s >= 0).all()
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-9)


def test_layer_norm_statistics():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        x = rng.normal(rng.uniform(-5, 5), rng.uniform(0.5, 4), size=(6, 16))
        y = nc.layer_norm(Tensor(x)).data
        assert np.abs(y.mean(axis=-1)).max() <= 1e-7
        assert np.abs(y.var(axis=-1) - 1.0).max() <= 1e-6


def test_dropout_reproducible_and_identities():
    x = Tensor(np.random.default_rng(0).standard_normal((5, 7)))
    a = nc.dropout(x, 0.3, np.random.default_rng(5)).data
    b = nc.dropout(x, 0.3, np.random.default_rng(5)).data
    assert a.tobytes() == b.tobytes()
    kept = a != 0
    np.testing.assert_allclose(a[kept], x.data[kept] / 0.7)
    assert nc.dropout(x, 0.0, np.random.default_rng(1)).data.tobytes() == x.data.tobytes()
    assert nc.dropout(x, 0.9, None, training=False).data.tobytes() == x.data.tobytes()


# ------------------------------------------------------------------ Adam

def scalar_adam(w, grad_fn, steps, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t in range(1, steps + 1):
        g = grad_fn(w)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        w = w - lr * mhat / (np.sqrt(vhat) + eps)
    return w


def test_adam_first_step_is_lr_times_sign():
    for g in (0.3, -7.0, 1e-3):
        p = {"w": np.array([1.0])}
        state = nc.AdamState.for_params(p, lr=0.01)
        nc.adam_step(p, {"w": np.array([g])}, state)
        np.testing.assert_allclose(p["w"], 1.0 - 0.01 * np.sign(g), atol=1e-7)
        assert state.t == 1


def test_adam_zero_gradient_is_noop():
    p = {"w": np.array([1.5, -2.0])}
    state = nc.AdamState.for_params(p)
    nc.adam_step(p, {"w": np.zeros(2)}, state)
    np.testing.assert_array_equal(p["w"], [1.5, -2.0])
    assert not state.m["w"].any() and not state.v["w"].any()
    assert state.t == 1


def test_adam_quadratic_matches_scalar_recurrence():
    p = {"w": np.array([0.0])}
    state = nc.AdamState.for_params(p, lr=0.1)
    for _ in range(100):
        w = Tensor(p["w"], requires_grad=True)
        d = w - 2.0
        nc.backward(nc.reduce_sum(d * d))
        nc.adam_step(p, {"w": w.grad}, state)
    expected = scalar_adam(0.0, lambda w: 2 * (w - 2.0), 100, 0.1)
    assert abs(p["w"][0] - 2.0) < 2.0
    np.testing.assert_allclose(p["w"][0], expected, rtol=1e-12)


def test_adam_rejects_bad_input():
    p = {"w": np.zeros(3)}
    state = nc.AdamState.for_params(p)
    with pytest.raises(nc.ShapeError):
        nc.adam_step(p, {"w": np.zeros(2)}, state)
    with pytest.raises(nc.NonFiniteError):
        nc.adam_step(p, {"w": np.array([0.0, np.inf, 0.0])}, state)
    with pytest.raises(ValueError):
        nc.AdamState(beta1=1.0)


def test_grad_check_quadratic():
    rng = np.random.default_rng(3)
    assert nc.grad_check(lambda t: nc.reduce_sum(t * t), rng.standard_normal((4, 3))) <= 1e-6


def test_grad_check_rejects_nonfinite():
    with pytest.raises(nc.NonFiniteError):
        nc.grad_check(lambda t: nc.reduce_sum(nc.log(t)), np.array([-1.0, 2.0]))
