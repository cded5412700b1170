"""Finite-difference validation of every differentiable op, 10 seeds each."""

import numpy as np
import pytest

from stereo3d.autodiff import Tensor, check_gradients, ops, random_input

SEEDS = range(10)
TOL = 1e-4


def separated_input(shape, seed) -> Tensor:
    """Values with pairwise gaps far above the FD step, for min_reduce."""
    rng = np.random.default_rng(seed)
    n = int(np.prod(shape))
    vals = np.linspace(-1.0, 1.0, n)
    return Tensor(rng.permutation(vals).reshape(shape), requires_grad=True)


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_add(seed):
    a, b = random_input((3, 4), seed), random_input((4,), seed + 100)
    assert check_gradients(ops.add, [a, b], seed=seed) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_sub(seed):
    a, b = random_input((2, 3), seed), random_input((2, 1), seed + 100)
    assert check_gradients(ops.sub, [a, b], seed=seed) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_mul(seed):
    a, b = random_input((3, 4), seed), random_input((3, 4), seed + 100)
    assert check_gradients(ops.mul, [a, b], seed=seed) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_scale_square(seed):
    x = random_input((5,), seed)
    assert check_gradients(lambda t: ops.scale(t, -2.5), [x], seed=seed) < TOL
    assert check_gradients(ops.square, [x], seed=seed) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_relu_away_from_kink(seed):
    rng = np.random.default_rng(seed)
    vals = rng.uniform(0.1, 1.0, size=12) * rng.choice([-1.0, 1.0], size=12)
    x = Tensor(vals.reshape(3, 4), requires_grad=True)
    assert check_gradients(ops.relu, [x], seed=seed) < 1e-6


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_sigmoid(seed):
    x = random_input((3, 4), seed)
    assert check_gradients(ops.sigmoid, [x], seed=seed) < TOL


def test_grad_sigmoid_chain_depth3():
    x = random_input((4,), 0)
    fn = lambda t: ops.sigmoid(ops.sigmoid(ops.sigmoid(t)))
    assert check_gradients(fn, [x], seed=0) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_log(seed):
    x = random_input((3, 4), seed, lo=0.2, hi=2.0)
    assert check_gradients(ops.log, [x], seed=seed) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_clip_interior(seed):
    x = random_input((3, 4), seed, lo=0.2, hi=0.8)
    assert check_gradients(lambda t: ops.clip(t, 0.0, 1.0), [x], seed=seed) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_reductions(seed):
    x = random_input((3, 4), seed)
    assert check_gradients(lambda t: ops.sum_(t, axis=1), [x], seed=seed) < TOL
    assert check_gradients(lambda t: ops.mean(t, axis=0), [x], seed=seed) < TOL
    assert check_gradients(ops.mean, [x], seed=seed) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_min_reduce(seed):
    x = separated_input((8,), seed)
    assert check_gradients(lambda t: ops.min_reduce(t, axis=0), [x], seed=seed) < TOL
    m = separated_input((4, 6), seed + 50)
    assert check_gradients(lambda t: ops.min_reduce(t, axis=1), [m], seed=seed) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_concat_reshape(seed):
    a, b = random_input((2, 3), seed), random_input((2, 5), seed + 100)
    fn = lambda u, v: ops.reshape(ops.concat([u, v], axis=1), (4, 4))
    assert check_gradients(fn, [a, b], seed=seed) < TOL


def test_grad_linear_seed0():
    x, w, b = random_input((4, 3), 0), random_input((3, 5), 1), random_input((5,), 2)
    assert check_gradients(ops.linear, [x, w, b], seed=0) < 1e-6


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_linear(seed):
    x, w, b = random_input((4, 3), seed), random_input((3, 5), seed + 100), random_input((5,), seed + 200)
    assert check_gradients(ops.linear, [x, w, b], seed=seed) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_pad_crop(seed):
    x = random_input((1, 2, 4, 5), seed)
    assert check_gradients(lambda t: ops.pad_reflect2d(t, (1, 1), (2, 1)), [x], seed=seed) < TOL
    assert check_gradients(lambda t: ops.crop_spatial(t, 1, 3, 0, 4), [x], seed=seed) < TOL


def test_grad_conv2d_reference_shape():
    # the canonical configuration: 2x3x8x8 input, 4x3x3x3 kernel
    x, w, b = random_input((2, 3, 8, 8), 0), random_input((4, 3, 3, 3), 1), random_input((4,), 2)
    assert check_gradients(lambda *a: ops.conv2d(*a, stride=1, padding=1), [x, w, b], seed=0) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_conv2d(seed):
    x, w, b = random_input((2, 3, 6, 6), seed), random_input((4, 3, 3, 3), seed + 100), random_input((4,), seed + 200)
    assert check_gradients(lambda *a: ops.conv2d(*a, stride=2, padding=1), [x, w, b], seed=seed) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_conv_transpose2d(seed):
    x, w, b = random_input((2, 3, 4, 4), seed), random_input((3, 2, 3, 3), seed + 100), random_input((2,), seed + 200)
    fn = lambda *a: ops.conv_transpose2d(*a, stride=2, padding=1, output_padding=1)
    assert check_gradients(fn, [x, w, b], seed=seed) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_conv3d(seed):
    x, w, b = random_input((1, 2, 4, 4, 4), seed), random_input((2, 2, 3, 3, 3), seed + 100), random_input((2,), seed + 200)
    assert check_gradients(lambda *a: ops.conv3d(*a, stride=2, padding=1), [x, w, b], seed=seed) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_conv_transpose3d(seed):
    x, w, b = random_input((1, 2, 3, 3, 3), seed), random_input((2, 2, 4, 4, 4), seed + 100), random_input((2,), seed + 200)
    fn = lambda *a: ops.conv_transpose3d(*a, stride=2, padding=1)
    assert check_gradients(fn, [x, w, b], seed=seed) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_batch_norm_train(seed):
    x = random_input((4, 3, 5, 5), seed)
    g = random_input((3,), seed + 100, lo=0.5, hi=1.5)
    b = random_input((3,), seed + 200)
    rm, rv = np.zeros(3), np.ones(3)
    fn = lambda *a: ops.batch_norm(*a, rm, rv, training=True)
    assert check_gradients(fn, [x, g, b], seed=seed) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_grad_batch_norm_eval(seed):
    x = random_input((4, 3, 5, 5), seed)
    g = random_input((3,), seed + 100, lo=0.5, hi=1.5)
    b = random_input((3,), seed + 200)
    rng = np.random.default_rng(seed + 300)
    rm = rng.uniform(-0.5, 0.5, 3)
    rv = rng.uniform(0.5, 2.0, 3)
    fn = lambda *a: ops.batch_norm(*a, rm, rv, training=False)
    assert check_gradients(fn, [x, g, b], seed=seed) < TOL
