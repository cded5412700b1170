import numpy as np
import pytest

from stereo3d.autodiff import NumericError, ShapeError, Tensor, no_grad, ops


def test_tensor_dtype_coercion():
    t = Tensor([1, 2, 3])
    assert t.dtype == np.float32
    t64 = Tensor(np.arange(3, dtype=np.float64))
    assert t64.dtype == np.float64


def test_add_mul_values_and_broadcast():
    a = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]), requires_grad=True)
    b = Tensor(np.array([10.0, 20.0]), requires_grad=True)
    y = ops.mul(ops.add(a, b), Tensor(np.array(2.0)))
    assert np.array_equal(y.data, np.array([[22.0, 44.0], [26.0, 48.0]]))
    y.backward(np.ones_like(y.data))
    assert np.array_equal(a.grad, np.full((2, 2), 2.0))
    # broadcast dim sums the gradient
    assert np.array_equal(b.grad, np.array([4.0, 4.0]))


def test_operator_sugar():
    a = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    y = (-a) * 3.0 + 1.0
    assert np.array_equal(y.data, np.array([-2.0, 7.0]))


def test_sigmoid_at_zero():
    y = ops.sigmoid(Tensor(np.zeros(4)))
    assert np.array_equal(y.data, np.full(4, 0.5))


def test_sigmoid_extreme_inputs_stable():
    y = ops.sigmoid(Tensor(np.array([-1000.0, 1000.0])))
    assert np.all(np.isfinite(y.data))
    assert y.data[0] == 0.0
    assert y.data[1] == 1.0


def test_relu_forward():
    y = ops.relu(Tensor(np.array([-1.0, 0.0, 2.5])))
    assert np.array_equal(y.data, np.array([0.0, 0.0, 2.5]))


def test_log_clips_small_values():
    y = ops.log(Tensor(np.array([0.0, 1.0])))
    assert y.data[0] == pytest.approx(np.log(1e-12))
    assert y.data[1] == 0.0


def test_clip_gradient_masks_outside_range():
    x = Tensor(np.array([-0.5, 0.3, 1.7]), requires_grad=True)
    y = ops.clip(x, 0.0, 1.0)
    assert np.array_equal(y.data, np.array([0.0, 0.3, 1.0]))
    y.backward(np.ones(3))
    assert np.array_equal(x.grad, np.array([0.0, 1.0, 0.0]))


def test_concat_shapes_and_backward_split():
    a = Tensor(np.arange(6, dtype=np.float64).reshape(2, 3), requires_grad=True)
    b = Tensor(np.arange(10, dtype=np.float64).reshape(2, 5), requires_grad=True)
    y = ops.concat([a, b], axis=1)
    assert y.shape == (2, 8)
    g = np.random.default_rng(0).standard_normal((2, 8))
    y.backward(g)
    assert np.array_equal(a.grad, g[:, :3])
    assert np.array_equal(b.grad, g[:, 3:])


def test_concat_shape_mismatch_raises():
    a = Tensor(np.zeros((2, 3)))
    b = Tensor(np.zeros((3, 3)))
    with pytest.raises(ShapeError):
        ops.concat([a, b], axis=1)


def test_min_reduce_tie_goes_to_first_index():
    x = Tensor(np.array([3.0, 1.0, 1.0, 2.0]), requires_grad=True)
    y = ops.min_reduce(x, axis=0)
    assert y.data == 1.0
    y.backward(np.asarray(1.0))
    assert np.array_equal(x.grad, np.array([0.0, 1.0, 0.0, 0.0]))


def test_min_reduce_along_axis():
    x = Tensor(np.array([[4.0, 2.0], [1.0, 5.0]]), requires_grad=True)
    y = ops.min_reduce(x, axis=1)
    assert np.array_equal(y.data, np.array([2.0, 1.0]))
    y.backward(np.array([10.0, 20.0]))
    assert np.array_equal(x.grad, np.array([[0.0, 10.0], [20.0, 0.0]]))


def test_sum_mean_axis_keepdims():
    x = Tensor(np.arange(12, dtype=np.float64).reshape(3, 4), requires_grad=True)
    s = ops.sum_(x, axis=0, keepdims=True)
    assert s.shape == (1, 4)
    m = ops.mean(x)
    assert float(m.data) == pytest.approx(5.5)
    m.backward()
    assert np.allclose(x.grad, np.full((3, 4), 1.0 / 12.0))


def test_reshape_roundtrips_gradient():
    x = Tensor(np.arange(6, dtype=np.float64), requires_grad=True)
    y = ops.reshape(x, (2, 3))
    g = np.arange(6, dtype=np.float64).reshape(2, 3)
    y.backward(g)
    assert np.array_equal(x.grad, g.reshape(-1))


def test_crop_spatial_backward_zero_fills():
    x = Tensor(np.random.default_rng(1).standard_normal((1, 2, 5, 5)), requires_grad=True)
    y = ops.crop_spatial(x, 1, 4, 0, 3)
    assert y.shape == (1, 2, 3, 3)
    y.backward(np.ones((1, 2, 3, 3)))
    assert x.grad.sum() == 18.0
    assert x.grad[0, 0, 0, 0] == 0.0


def test_pad_reflect_matches_numpy():
    x = np.random.default_rng(2).standard_normal((1, 1, 4, 5))
    y = ops.pad_reflect2d(Tensor(x), (1, 2), (2, 1))
    ref = np.pad(x, ((0, 0), (0, 0), (1, 2), (2, 1)), mode="reflect")
    assert np.array_equal(y.data, ref)


def test_conv2d_identity_kernel():
    x = np.random.default_rng(3).standard_normal((1, 1, 6, 6))
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 1, 1] = 1.0
    y = ops.conv2d(Tensor(x), Tensor(w), Tensor(np.zeros(1)), stride=1, padding=1)
    assert np.allclose(y.data, x)


def test_conv2d_channel_mismatch_raises():
    with pytest.raises(ShapeError):
        ops.conv2d(Tensor(np.zeros((1, 3, 8, 8))), Tensor(np.zeros((4, 2, 3, 3))), Tensor(np.zeros(4)))


def test_conv2d_kernel_larger_than_input_raises():
    with pytest.raises(ShapeError):
        ops.conv2d(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 5, 5))), Tensor(np.zeros(1)))


def test_conv_transpose2d_output_shape():
    x = Tensor(np.zeros((2, 3, 4, 4)))
    w = Tensor(np.zeros((3, 5, 3, 3)))
    b = Tensor(np.zeros(5))
    y = ops.conv_transpose2d(x, w, b, stride=2, padding=1, output_padding=1)
    assert y.shape == (2, 5, 8, 8)


def test_conv_transpose_output_padding_bound():
    x = Tensor(np.zeros((1, 2, 4, 4)))
    w = Tensor(np.zeros((2, 2, 3, 3)))
    with pytest.raises(ShapeError):
        ops.conv_transpose2d(x, w, Tensor(np.zeros(2)), stride=2, output_padding=2)


def test_conv_adjoint_identity():
    # <conv(x), y> == <x, convT(y)> when both use the same kernel array
    rng = np.random.default_rng(7)
    x = rng.standard_normal((2, 3, 9, 9))
    w = rng.standard_normal((4, 3, 3, 3))
    y = rng.standard_normal((2, 4, 5, 5))
    cx = ops.conv2d(Tensor(x), Tensor(w), Tensor(np.zeros(4)), stride=2, padding=1).data
    cty = ops.conv_transpose2d(Tensor(y), Tensor(w), Tensor(np.zeros(3)), stride=2, padding=1).data
    assert (cx * y).sum() == pytest.approx((x * cty).sum(), rel=1e-12)


def test_forward_determinism():
    rng = np.random.default_rng(11)
    x = rng.standard_normal((2, 3, 8, 8))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    y1 = ops.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=2, padding=1).data
    y2 = ops.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=2, padding=1).data
    assert np.array_equal(y1, y2)


def test_nonfinite_forward_is_hard_error():
    with pytest.raises(NumericError):
        ops.add(Tensor(np.array([1.0])), Tensor(np.array([np.inf])))


def test_nonfinite_input_rejected_at_construction():
    with pytest.raises(NumericError):
        Tensor(np.array([np.nan]))


def test_no_grad_skips_graph():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = ops.mul(x, x)
    assert y._parents == ()
    assert not y.requires_grad


def test_batch_norm_eval_independent_of_batch():
    rng = np.random.default_rng(5)
    x1 = rng.standard_normal((2, 3, 4, 4))
    x2 = rng.standard_normal((5, 3, 4, 4))
    rm = np.array([0.1, -0.2, 0.3])
    rv = np.array([1.2, 0.7, 2.0])
    gamma, beta = Tensor(np.ones(3)), Tensor(np.zeros(3))
    solo = ops.batch_norm(Tensor(x1), gamma, beta, rm, rv, training=False).data
    joint = ops.batch_norm(
        Tensor(np.concatenate([x1, x2])), gamma, beta, rm, rv, training=False
    ).data
    assert np.array_equal(solo, joint[:2])


def test_batch_norm_running_stats_update():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((4, 3, 5, 5))
    rm, rv = np.zeros(3), np.ones(3)
    ops.batch_norm(Tensor(x), Tensor(np.ones(3)), Tensor(np.zeros(3)), rm, rv, training=True)
    n = x.size // 3
    assert np.allclose(rm, 0.1 * x.mean(axis=(0, 2, 3)))
    assert np.allclose(rv, 0.9 + 0.1 * x.var(axis=(0, 2, 3)) * n / (n - 1))


def test_batch_norm_zero_variance_channel():
    x = np.ones((2, 1, 3, 3))
    rm, rv = np.zeros(1), np.ones(1)
    y = ops.batch_norm(Tensor(x), Tensor(np.ones(1)), Tensor(np.zeros(1)), rm, rv, training=True)
    assert np.all(np.isfinite(y.data))
    assert np.allclose(y.data, 0.0)


def test_linear_shape_check():
    with pytest.raises(ShapeError):
        ops.linear(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))), Tensor(np.zeros(5)))
