import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hgcn import autodiff as ad
from hgcn.autodiff import Tape, Tensor, backward, parameter
from hgcn.errors import ShapeError


def numeric_grad(fn, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn()
        flat[i] = orig - h
        down = fn()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return g


def analytic_grad(build, params):
    with Tape() as tape:
        out = build()
    return backward(tape, out, params)


UNARY = {
    "relu": lambda x: ad.relu(x),
    "leaky": lambda x: ad.leaky_relu(x, 0.2),
    "sigmoid": lambda x: ad.sigmoid(x),
    "softmax": lambda x: ad.softmax_rows(x),
    "transpose": lambda x: ad.transpose(x),
    "scale": lambda x: ad.scale(x, -2.5),
    "slice": lambda x: x[:, 1:],
    "reshape": lambda x: ad.reshape(x, (x.cols, x.rows)),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_rules_match_finite_differences(name):
    rng = np.random.default_rng(3)
    x = parameter(rng.normal(size=(3, 4)))
    weights = Tensor(rng.normal(size=(3, 4)) if name not in ("transpose", "reshape")
                     else rng.normal(size=(4, 3)))
    if name == "slice":
        weights = Tensor(rng.normal(size=(3, 3)))

    def build():
        return ad.total(UNARY[name](x) * weights)

    g = analytic_grad(build, [x])[x]
    num = numeric_grad(lambda: build().item(), x.data)
    assert np.allclose(g, num, atol=1e-7)


def test_binary_rules_with_broadcasting():
    rng = np.random.default_rng(0)
    a = parameter(rng.normal(size=(2, 3, 4)))
    b = parameter(rng.normal(size=(4, 5)))
    bias = parameter(rng.normal(size=(1, 5)))
    c = parameter(rng.normal(size=(1, 5)))

    def build():
        y = (a @ b + bias) * c - bias
        return ad.mean(y * y)

    grads = analytic_grad(build, [a, b, bias, c])
    for p in (a, b, bias, c):
        num = numeric_grad(lambda: build().item(), p.data)
        assert np.allclose(grads[p], num, atol=1e-7), p


def test_masked_softmax_gradient_and_empty_rows():
    rng = np.random.default_rng(1)
    x = parameter(rng.normal(size=(3, 4)))
    mask = np.array([[1, 0, 1, 1], [0, 0, 0, 0], [0, 1, 0, 0]], dtype=bool)
    w = Tensor(rng.normal(size=(3, 4)))
    s = ad.softmax_rows(x, mask).data
    assert np.allclose(s.sum(axis=1), [1, 0, 1])
    assert np.all(s[~mask] == 0)

    def build():
        return ad.total(ad.softmax_rows(x, mask) * w)

    g = analytic_grad(build, [x])[x]
    assert np.allclose(g, numeric_grad(lambda: build().item(), x.data), atol=1e-7)


def test_concat_and_getitem_route_gradients():
    a = parameter(np.arange(6.0).reshape(2, 3))
    b = parameter(np.ones((2, 2)))

    def build():
        joined = ad.concat([a, b], axis=-1)
        return ad.total(joined[:, 2:4] * 3.0)

    grads = analytic_grad(build, [a, b])
    assert np.array_equal(grads[a], [[0, 0, 3], [0, 0, 3]])
    assert np.array_equal(grads[b], [[3, 0], [3, 0]])


def test_losses_are_stable_and_correct():
    z = Tensor([[1000.0, -1000.0]])
    assert np.isfinite(ad.bce_with_logits(z, np.array([1.0, 0.0])).item())
    assert ad.softmax_cross_entropy(z, np.array([[1.0, 0.0]])).item() == pytest.approx(0.0)
    assert ad.bce_with_logits(Tensor([[0.0]]), np.array([1.0])).item() == pytest.approx(np.log(2))


@given(st.lists(st.floats(-30, 30), min_size=2, max_size=6))
@settings(max_examples=40, deadline=None)
def test_cross_entropy_gradient_property(values):
    z = parameter(np.array(values)[None, :])
    y = np.zeros((1, len(values)))
    y[0, 0] = 1.0

    def build():
        return ad.softmax_cross_entropy(z, y)

    g = analytic_grad(build, [z])[z]
    # softmax minus one-hot sums to zero
    assert abs(g.sum()) < 1e-9
    assert g[0, 0] <= 0


def test_shape_errors_name_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 1\)"):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((4, 1)))
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) + Tensor(np.ones((3, 2)))


def test_backward_requires_scalar_and_fills_unused_params():
    a = parameter(np.ones((2, 2)))
    unused = parameter(np.ones((3,)))
    with Tape() as tape:
        out = a * 2.0
    with pytest.raises(ValueError):
        backward(tape, out)
    with Tape() as tape:
        s = ad.total(a)
    grads = backward(tape, s, [a, unused])
    assert np.array_equal(grads[unused], np.zeros((1, 3)))
    assert np.array_equal(grads[a], np.ones((2, 2)))


def test_nothing_recorded_outside_a_tape_or_for_constants():
    a = parameter(np.ones((2, 2)))
    _ = a @ a
    with Tape() as tape:
        _ = Tensor(np.ones((2, 2))) @ Tensor(np.ones((2, 2)))
        assert len(tape) == 0
        _ = a @ a
        assert len(tape) == 1


def test_gradient_accumulates_over_reuse():
    w = parameter(np.array([[3.0]]))
    with Tape() as tape:
        out = ad.total(w * w + w)
    assert backward(tape, out, [w])[w][0, 0] == pytest.approx(7.0)
