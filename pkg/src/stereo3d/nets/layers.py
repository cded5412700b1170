"""Layer objects: thin stateful wrappers over the autodiff ops.

Every layer registers its parameters in a shared ParameterStore under a
dotted name prefix, so the registry is flat, ordered, and serializable. The
layers hold references to the registered Tensors; calling a layer builds
graph nodes through the functional ops.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import ParameterStore, Tensor, ops


def he_normal(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


def take_channel(x: Tensor, i: int) -> Tensor:
    """Select channel i of an [N,C,...] tensor, dropping the channel axis."""
    c = x.shape[1]
    if not 0 <= i < c:
        raise ValueError(f"channel {i} out of range for {x.shape}")
    mask = np.zeros((1, c) + (1,) * (x.data.ndim - 2), x.data.dtype)
    mask[0, i] = 1.0
    return ops.sum_(ops.mul(x, Tensor(mask)), axis=1)


class Conv:
    """Convolution in 2 or 3 spatial dimensions, weight [K, C, *kernel]."""

    def __init__(self, store: ParameterStore, name: str, c_in: int, c_out: int,
                 kernel: int, rng: np.random.Generator, nd: int = 2,
                 stride: int = 1, padding: int = 0):
        self.stride, self.padding, self.nd = stride, padding, nd
        shape = (c_out, c_in) + (kernel,) * nd
        fan_in = c_in * kernel**nd
        self.w = store.parameter(f"{name}.w", he_normal(rng, shape, fan_in))
        self.b = store.parameter(f"{name}.b", np.zeros(c_out))

    def __call__(self, x: Tensor) -> Tensor:
        op = ops.conv2d if self.nd == 2 else ops.conv3d
        return op(x, self.w, self.b, self.stride, self.padding)


class ConvTranspose:
    """Transposed convolution, weight [C_in, C_out, *kernel]."""

    def __init__(self, store: ParameterStore, name: str, c_in: int, c_out: int,
                 kernel: int, rng: np.random.Generator, nd: int = 2,
                 stride: int = 1, padding: int = 0):
        self.stride, self.padding, self.nd = stride, padding, nd
        shape = (c_in, c_out) + (kernel,) * nd
        fan_in = c_in * kernel**nd
        self.w = store.parameter(f"{name}.w", he_normal(rng, shape, fan_in))
        self.b = store.parameter(f"{name}.b", np.zeros(c_out))

    def __call__(self, x: Tensor) -> Tensor:
        op = ops.conv_transpose2d if self.nd == 2 else ops.conv_transpose3d
        return op(x, self.w, self.b, self.stride, self.padding)


class Linear:
    def __init__(self, store: ParameterStore, name: str, d_in: int, d_out: int,
                 rng: np.random.Generator):
        self.w = store.parameter(f"{name}.w", he_normal(rng, (d_in, d_out), d_in))
        self.b = store.parameter(f"{name}.b", np.zeros(d_out))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.w, self.b)


class BatchNorm:
    def __init__(self, store: ParameterStore, name: str, channels: int):
        self.gamma = store.parameter(f"{name}.gamma", np.ones(channels))
        self.beta = store.parameter(f"{name}.beta", np.zeros(channels))
        self.running_mean = store.buffer(f"{name}.running_mean", np.zeros(channels))
        self.running_var = store.buffer(f"{name}.running_var", np.ones(channels))

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return ops.batch_norm(x, self.gamma, self.beta, self.running_mean,
                              self.running_var, training)


class ResidualBlock:
    """conv-BN-ReLU twice plus a skip; 1x1 projection when shapes change."""

    def __init__(self, store: ParameterStore, name: str, c_in: int, c_out: int,
                 rng: np.random.Generator, stride: int = 1):
        self.conv1 = Conv(store, f"{name}.conv1", c_in, c_out, 3, rng,
                          stride=stride, padding=1)
        self.bn1 = BatchNorm(store, f"{name}.bn1", c_out)
        self.conv2 = Conv(store, f"{name}.conv2", c_out, c_out, 3, rng, padding=1)
        self.bn2 = BatchNorm(store, f"{name}.bn2", c_out)
        self.proj = None
        if c_in != c_out or stride > 1:
            self.proj = Conv(store, f"{name}.proj", c_in, c_out, 1, rng,
                             stride=stride)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        y = ops.relu(self.bn1(self.conv1(x), training))
        y = self.bn2(self.conv2(y), training)
        skip = self.proj(x) if self.proj is not None else x
        return ops.relu(ops.add(y, skip))


class FireModule:
    """Squeeze 1x1 then parallel 1x1/3x3 expands, channel-concatenated."""

    def __init__(self, store: ParameterStore, name: str, c_in: int, c_out: int,
                 rng: np.random.Generator):
        if c_out % 2 != 0:
            raise ValueError(f"fire module output channels must be even: {c_out}")
        squeeze = max(c_out // 8, 1)
        expand = c_out // 2
        if squeeze >= 2 * expand:
            raise ValueError("squeeze wider than the expand stage")
        self.squeeze = Conv(store, f"{name}.squeeze", c_in, squeeze, 1, rng)
        self.expand1 = Conv(store, f"{name}.expand1", squeeze, expand, 1, rng)
        self.expand3 = Conv(store, f"{name}.expand3", squeeze, expand, 3, rng,
                            padding=1)

    def __call__(self, x: Tensor) -> Tensor:
        s = ops.relu(self.squeeze(x))
        return ops.concat([ops.relu(self.expand1(s)), ops.relu(self.expand3(s))],
                          axis=1)
