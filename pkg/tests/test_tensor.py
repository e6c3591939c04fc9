import math

import numpy as np
import pytest

from fictsc import tensor as T
from fictsc.tensor import (ComputationRecord, ParameterSet, ShapeError, StaleRecordError, Tensor,
                           backward, finite_difference_gradient)
from oracles import grad_mismatch


def _loss_through(prim, shapes, seed, **kw):
    """Scalar = sum(prim(inputs) * R) with fixed random R, as a function of a ParameterSet."""
    rng = np.random.default_rng(seed)
    params = ParameterSet([(f"x{i}", rng.normal(size=s)) for i, s in enumerate(shapes)])
    holder = {}

    def f(ps, record=None):
        out = prim(*[ps[f"x{i}"] for i in range(len(shapes))], **kw)
        if "R" not in holder:
            holder["R"] = Tensor(np.random.default_rng(seed + 1).normal(size=out.shape))
        return T.tsum(T.mul(out, holder["R"]))

    return params, f


def _check(prim, shapes, seed, **kw):
    params, f = _loss_through(prim, shapes, seed, **kw)
    with ComputationRecord() as rec:
        loss = f(params)
    backward(rec, loss)
    analytic = params.grad_vector()

    def value(ps):
        with ComputationRecord():
            return f(ps).item()

    numeric = finite_difference_gradient(value, params, 1e-5)
    return grad_mismatch(analytic, numeric)


def _ce(z):
    return T.softmax_cross_entropy(z, np.array([0, 2, 1, 1]))


PRIMITIVES = {
    "add": (T.add, [(3, 4), (3, 4)], {}),
    "add-bias": (T.add, [(3, 4), (4,)], {}),
    "mul": (T.mul, [(3, 4), (3, 4)], {}),
    "matmul": (T.matmul, [(3, 4), (4, 5)], {}),
    "relu": (T.relu, [(4, 6)], {}),
    "flatten": (T.flatten, [(2, 3, 4)], {}),
    "affine": (T.affine, [(3, 4), (4, 2), (2,)], {}),
    "conv1d": (T.conv1d, [(2, 3, 11), (4, 3, 5), (4,)], {}),
    "conv1d-even-kernel": (T.conv1d, [(2, 2, 9), (3, 2, 4)], {}),
    "max_pool1d": (T.max_pool1d, [(2, 3, 10)], {}),
    "mean_time": (T.mean_time, [(2, 3, 7)], {}),
    "concat": (lambda a, b: T.concat_channels([a, b]), [(2, 3, 5), (2, 2, 5)], {}),
    "cross_entropy": (_ce, [(4, 3)], {}),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
@pytest.mark.parametrize("seed", range(20))
def test_primitive_gradients_match_finite_differences(name, seed):
    prim, shapes, kw = PRIMITIVES[name]
    assert _check(prim, shapes, seed, **kw) <= 1.0


def test_cross_entropy_uniform_is_ln3():
    loss = T.softmax_cross_entropy(Tensor(np.zeros((1, 3))), np.array([1]))
    assert loss.item() == pytest.approx(math.log(3), abs=1e-12)


def test_relu_and_zero_conv():
    assert T.relu(Tensor([-1.0, 2.0])).values.tolist() == [0.0, 2.0]
    w = Tensor(np.random.default_rng(0).normal(size=(4, 2, 5)))
    out = T.conv1d(Tensor(np.zeros((3, 2, 8))), w)
    assert out.shape == (3, 4, 8) and not out.values.any()


def test_conv1d_matches_direct_correlation():
    rng = np.random.default_rng(3)
    x, w = rng.normal(size=(2, 3, 12)), rng.normal(size=(4, 3, 5))
    out = T.conv1d(Tensor(x), Tensor(w)).values
    xp = np.pad(x, ((0, 0), (0, 0), (2, 2)))
    ref = np.zeros_like(out)
    for t in range(12):
        ref[:, :, t] = np.einsum("bck,ock->bo", xp[:, :, t:t + 5], w)
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_cross_entropy_gradient_closed_form():
    z = np.array([[0.3, -1.2, 2.0]])
    logits = Tensor(z, requires_grad=True)
    with ComputationRecord() as rec:
        loss = T.softmax_cross_entropy(logits, np.array([1]))
    backward(rec, loss)
    p = np.exp(z - z.max())
    p /= p.sum()
    np.testing.assert_allclose(logits.grad, p - np.array([[0, 1, 0]]), atol=1e-14)


def test_sum_of_squares_gradient():
    w = Tensor([1.0, -2.0], requires_grad=True)
    with ComputationRecord() as rec:
        loss = T.tsum(T.mul(w, w))
    backward(rec, loss)
    assert w.grad.tolist() == [2.0, -4.0]


def test_fanout_accumulates():
    w = Tensor([3.0], requires_grad=True)
    with ComputationRecord() as rec:
        loss = T.tsum(T.add(T.mul(w, w), w))
    backward(rec, loss)
    assert w.grad.tolist() == [7.0]


def test_cross_entropy_nonnegative_and_decreasing():
    prev = math.inf
    for big in [0.0, 1.0, 5.0, 20.0, 100.0, 800.0]:
        v = T.softmax_cross_entropy(Tensor([[big, 0.0, 0.0]]), np.array([0])).item()
        assert v >= 0.0 and v <= prev
        prev = v
    assert prev == 0.0


def test_shape_errors_name_primitive_and_shapes():
    with pytest.raises(ShapeError, match=r"matmul.*\(2, 3\).*\(4, 5\)"):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))
    with pytest.raises(ShapeError, match="add"):
        T.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))
    with pytest.raises(ShapeError, match="conv1d"):
        T.conv1d(Tensor(np.ones((1, 2, 5))), Tensor(np.ones((3, 4, 3))))


def test_record_is_single_use_and_loss_must_be_scalar():
    w = Tensor([1.0, 2.0], requires_grad=True)
    with ComputationRecord() as rec:
        loss = T.tsum(T.mul(w, w))
    backward(rec, loss)
    with pytest.raises(StaleRecordError):
        backward(rec, loss)
    with ComputationRecord() as rec2:
        vec = T.mul(w, w)
    with pytest.raises(ShapeError):
        backward(rec2, vec)
    with ComputationRecord() as rec3:
        T.tsum(w)
    with pytest.raises(StaleRecordError):
        backward(rec3, loss)


def test_no_record_when_nothing_requires_grad():
    with ComputationRecord() as rec:
        T.mul(Tensor([1.0]), Tensor([2.0]))
    assert len(rec) == 0


def test_backward_counter():
    before = T.counters["backward"]
    w = Tensor([1.0], requires_grad=True)
    with ComputationRecord() as rec:
        loss = T.tsum(w)
    backward(rec, loss)
    assert T.counters["backward"] == before + 1


def test_finite_difference_examples():
    ps = ParameterSet([("t", np.array([3.0]))])
    g = finite_difference_gradient(lambda p: p["t"].values[0] ** 2, ps, 1e-5)
    assert abs(g[0] - 6.0) < 1e-8
    assert not finite_difference_gradient(lambda p: 4.2, ps).any()
    with pytest.raises(ValueError):
        finite_difference_gradient(lambda p: 0.0, ps, 0.0)


def test_parameter_set_roundtrip_and_order():
    rng = np.random.default_rng(0)
    ps = ParameterSet([("b", rng.normal(size=(2, 3))), ("a", rng.normal(size=4))])
    assert ps.names() == ["b", "a"] and ps.n == 10
    flat = ps.flatten()
    ps.unflatten(flat * 2)
    ps.unflatten(ps.flatten() / 2)
    np.testing.assert_array_equal(ps.flatten(), flat)
    with pytest.raises(ShapeError):
        ps.unflatten(np.zeros(3))
    with pytest.raises(KeyError):
        ps.add("a", np.zeros(1))
