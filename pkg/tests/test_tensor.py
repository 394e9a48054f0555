import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from conda_cosod import ops
from conda_cosod.gradcheck import PROBES, check_all_ops, check_op, grad_check
from conda_cosod.tensor import OPS, NonFiniteError, ShapeError, Tensor, count_macs, no_grad


def t(a, grad=False):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad)


# -- conv2d --------------------------------------------------------------

def test_conv_identity_kernel_is_identity():
    x = t(np.ones((1, 3, 3, 1)))
    y = ops.conv2d(x, t(np.ones((1, 1, 1, 1))), t([0.0]))
    assert np.array_equal(y.data, x.data)


def test_conv_center_is_hand_sum():
    x = t(np.arange(1, 10).reshape(1, 3, 3, 1))
    y = ops.conv2d(x, t(np.ones((3, 3, 1, 1))), t([0.0]), padding="same")
    assert y.shape == (1, 3, 3, 1)
    assert y.data[0, 1, 1, 0] == 45.0
    assert y.data[0, 0, 0, 0] == 1 + 2 + 4 + 5


def test_conv_channel_mismatch():
    with pytest.raises(ShapeError):
        ops.conv2d(t(np.ones((1, 4, 4, 2))), t(np.ones((3, 3, 3, 1))), t([0.0]))


def test_conv_valid_and_stride_shapes():
    x = t(np.random.default_rng(0).random((2, 7, 6, 3)))
    assert ops.conv2d(x, t(np.ones((3, 3, 3, 4))), t(np.zeros(4)), padding="valid").shape == (2, 5, 4, 4)
    assert ops.conv2d(x, t(np.ones((3, 3, 3, 4))), t(np.zeros(4)), stride=2).shape == (2, 4, 3, 4)


def test_conv_matches_direct_loop():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 5, 4, 3))
    k = rng.standard_normal((3, 3, 3, 2))
    b = rng.standard_normal(2)
    y = ops.conv2d(t(x), t(k), t(b)).data
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    ref = np.zeros((2, 5, 4, 2))
    for n in range(2):
        for i in range(5):
            for j in range(4):
                ref[n, i, j] = np.einsum("abc,abcd->d", xp[n, i:i + 3, j:j + 3], k) + b
    np.testing.assert_allclose(y, ref, atol=1e-12)


# -- resize --------------------------------------------------------------

def test_resize_constant_stays_constant():
    x = t(np.full((2, 5, 3, 2), 7.0))
    for oh, ow in [(1, 1), (4, 9), (10, 6)]:
        assert np.allclose(ops.bilinear_resize(x, oh, ow).data, 7.0, atol=0, rtol=1e-15)


def test_resize_half_pixel_example():
    x = t(np.array([0.0, 1.0]).reshape(1, 2, 1))
    y = ops.bilinear_resize(x, 1, 4).data.ravel()
    np.testing.assert_allclose(y, [0, 0.25, 0.75, 1.0], atol=1e-15)


def test_resize_identity_is_bitwise():
    x = t(np.random.default_rng(0).random((2, 5, 6, 3)))
    assert np.array_equal(ops.bilinear_resize(x, 5, 6).data, x.data)


def test_resize_roundtrip_of_constant():
    x = t(np.full((1, 6, 6, 1), 0.3))
    y = ops.bilinear_resize(ops.bilinear_resize(x, 3, 11), 6, 6)
    assert np.array_equal(y.data, x.data)


# -- linear / l2 / elementwise ------------------------------------------

def test_linear_examples():
    x = t([1.0, 2.0])
    assert np.array_equal(ops.linear(x, t(np.eye(2)), t([0.0, 0.0])).data, [1.0, 2.0])
    np.testing.assert_array_equal(ops.linear(x, t([[1.0, 0.0], [1.0, 1.0]]), t([0.5, 0.5])).data, [3.5, 2.5])
    y = ops.linear(t(np.random.default_rng(0).random((4, 3, 2))), t(np.zeros((2, 5))), t(np.full(5, 1.5)))
    assert np.all(y.data == 1.5)


def test_linear_shape_error():
    with pytest.raises(ShapeError):
        ops.linear(t([1.0, 2.0, 3.0]), t(np.eye(2)), t([0.0, 0.0]))


def test_l2_examples():
    np.testing.assert_allclose(ops.l2_normalize(t([3.0, 4.0])).data, [0.6, 0.8])
    assert np.array_equal(ops.l2_normalize(t([0.0, 0.0])).data, [0.0, 0.0])


def test_l2_unit_norm_property():
    rng = np.random.default_rng(0)
    v = rng.standard_normal((1000, 7)) * rng.uniform(1e-5, 1e3, size=(1000, 1))
    norms = np.linalg.norm(ops.l2_normalize(t(v)).data, axis=-1)
    assert np.max(np.abs(norms - 1.0)) < 1e-12


def test_elementwise_examples():
    assert np.array_equal(ops.elementwise("relu", t([-1.0, 0.0, 2.0])).data, [0, 0, 2])
    x = t(np.random.default_rng(0).random((3, 2)))
    assert np.array_equal(ops.elementwise("add", x, 0.0).data, x.data)
    assert np.array_equal(ops.elementwise("scale", x, factor=2.0).data, 2 * x.data)
    with pytest.raises(ValueError):
        ops.elementwise("pow", x)


def test_broadcast_mismatch():
    with pytest.raises(ShapeError):
        ops.add(t(np.ones((2, 3))), t(np.ones((4,))))


def test_mul_gradient_is_other_factor():
    rng = np.random.default_rng(0)
    x, y = t(rng.random((3, 4)), True), t(rng.random((3, 4)), True)
    ops.sum(ops.mul(x, y)).backward()
    assert np.array_equal(x.grad.data, y.data)
    assert grad_check(lambda: ops.sum(ops.mul(x, y)), [x, y]) < 1e-8


def test_relu_subgradient_zero_at_zero():
    x = t([0.0, -1.0, 1.0], True)
    ops.sum(ops.relu(x)).backward()
    assert np.array_equal(x.grad.data, [0.0, 0.0, 1.0])


# -- grad_check examples and the per-op suite --------------------------

def test_gradcheck_quadratic_and_constant():
    x = t(np.random.default_rng(0).standard_normal((4, 3)), True)
    assert grad_check(lambda: ops.sum(ops.mul(x, x)), [x]) < 1e-8
    x.grad = None
    ops.sum(ops.mul(x, x)).backward()
    np.testing.assert_allclose(x.grad.data, 2 * x.data)
    c = t(np.ones(3))
    assert grad_check(lambda: ops.sum(c), [x]) < 1e-8
    assert grad_check(lambda: ops.sum(ops.scale(x, 0.0)), [x]) < 1e-8


def test_gradcheck_requires_float64():
    x = Tensor(np.ones(3, dtype=np.float32), requires_grad=True)
    with pytest.raises(TypeError):
        grad_check(lambda: ops.sum(x), [x])


def test_every_registered_op_has_a_probe():
    assert set(PROBES) == set(OPS)


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients(name):
    assert check_op(name, trials=20) < 1e-4


def test_corrupted_gather_backward_is_detected(monkeypatch):
    gather = OPS["bilinear_gather"]
    original = gather.backward

    def corrupted(ctx, g):
        gv, gc = original(ctx, g)
        return gv, (None if gc is None else gc * 1.1)

    monkeypatch.setattr(gather, "backward", staticmethod(corrupted))
    assert check_op("bilinear_gather", trials=5) > 1e-3
    with pytest.raises(AssertionError):
        errs = check_all_ops(trials=3)
        assert max(errs.values()) < 1e-3


# -- contracts -----------------------------------------------------------

def test_nonfinite_is_an_error():
    with pytest.raises(NonFiniteError):
        ops.div(t([1.0]), t([0.0]))
    with pytest.raises(NonFiniteError):
        ops.mul(t([1e200]), t([1e200]))
    with pytest.raises(ValueError):
        ops.log(t([0.0]))


def test_backward_visits_shared_nodes_once():
    x = t([2.0], True)
    y = ops.mul(x, x)
    z = ops.add(y, y)  # dz/dx = 4x
    ops.sum(z).backward()
    assert x.grad.data[0] == 8.0


def test_grad_shape_matches_data():
    rng = np.random.default_rng(0)
    x = t(rng.random((2, 4, 4, 3)), True)
    k = t(rng.random((3, 3, 3, 2)), True)
    ops.sum(ops.bilinear_resize(ops.conv2d(x, k, t(np.zeros(2))), 3, 5)).backward()
    assert x.grad.shape == x.shape and k.grad.shape == k.shape


def test_no_grad_builds_no_graph():
    x = t([1.0, 2.0], True)
    with no_grad():
        y = ops.mul(x, x)
    assert y._node is None


def test_count_macs_conv():
    x = t(np.ones((2, 5, 5, 3)))
    with count_macs() as c:
        ops.conv2d(x, t(np.ones((3, 3, 3, 4))), t(np.zeros(4)))
    assert c == {"conv2d": 2 * 5 * 5 * 9 * 3 * 4}


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=3, max_dims=4, max_side=5),
                  elements=st.floats(-10, 10)))
def test_ops_are_pure(arr):
    x = t(arr)
    for fn in (lambda v: ops.relu(v), lambda v: ops.bilinear_resize(v, 3, 2),
               lambda v: ops.l2_normalize(v), lambda v: ops.sigmoid(v)):
        a, b = fn(x).data, fn(x).data
        assert np.array_equal(a, b)
        assert np.array_equal(x.data, arr)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 6), st.integers(1, 6), st.integers(1, 3))
def test_identity_conv_property(n, h, w, c):
    x = t(np.random.default_rng(n * 100 + h * 10 + w).standard_normal((n, h, w, c)))
    y = ops.conv2d(x, t(np.eye(c).reshape(1, 1, c, c)), t(np.zeros(c)))
    assert np.array_equal(y.data, x.data)
