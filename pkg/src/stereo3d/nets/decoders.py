"""Decoders turning the fused feature vector into a shape prediction.

The volume decoder reshapes the vector into a tiny seed volume and runs
nine transposed 3-D convolutions: four stride-2 stages that reach the
target resolution and five stride-1 refining stages, the refiners carrying
identity residual links when their channel counts allow. A final sigmoid
produces occupancy probabilities.

The point decoder reshapes the vector into a 4x4 seed map, applies eight
fire modules, and emits every coordinate from one linear layer.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import ParameterStore, Tensor, ops
from .config import POINT_SEED_HW, ScaleConfig
from .layers import ConvTranspose, FireModule, Linear


class VolumeDecoder:
    def __init__(self, store: ParameterStore, cfg: ScaleConfig, in_len: int,
                 rng: np.random.Generator, name: str = "volume_dec"):
        seed = cfg.volume_seed
        if in_len % seed**3 != 0:
            raise ValueError(
                f"decoder input length {in_len} does not fill a {seed}^3 seed"
            )
        self.seed = seed
        self.seed_channels = in_len // seed**3
        self.in_len = in_len
        self.volume_res = cfg.volume_res
        c = cfg.base_channels
        plan = [(2, 8 * c), (1, 8 * c), (2, 4 * c), (1, 4 * c), (2, 2 * c),
                (1, 2 * c), (2, c), (1, c), (1, 1)]
        self.stages = []
        c_in = self.seed_channels
        for i, (stride, c_out) in enumerate(plan):
            kernel = 4 if stride == 2 else 3
            conv = ConvTranspose(store, f"{name}.stage{i + 1}", c_in, c_out,
                                 kernel, rng, nd=3, stride=stride, padding=1)
            residual = stride == 1 and c_in == c_out
            last = i == len(plan) - 1
            self.stages.append((conv, residual, last))
            c_in = c_out

    def __call__(self, z: Tensor, training: bool) -> Tensor:
        n = z.shape[0]
        x = ops.reshape(z, (n, self.seed_channels) + (self.seed,) * 3)
        for conv, residual, last in self.stages:
            y = conv(x)
            if residual:
                y = ops.add(y, x)
            x = y if last else ops.relu(y)
        x = ops.sigmoid(x)
        r = self.volume_res
        return ops.reshape(x, (n, r, r, r))


class PointDecoder:
    N_FIRE = 8

    def __init__(self, store: ParameterStore, cfg: ScaleConfig, in_len: int,
                 rng: np.random.Generator, name: str = "point_dec"):
        hw = POINT_SEED_HW
        if in_len % (hw * hw) != 0:
            raise ValueError(
                f"decoder input length {in_len} does not fill a {hw}x{hw} seed"
            )
        self.seed_channels = in_len // (hw * hw)
        self.in_len = in_len
        self.n_points = cfg.n_points
        c = cfg.base_channels
        widths = [8 * c, 8 * c, 4 * c, 4 * c, 2 * c, 2 * c, c, c]
        assert len(widths) == self.N_FIRE
        self.fires = []
        c_in = self.seed_channels
        for i, c_out in enumerate(widths):
            self.fires.append(
                FireModule(store, f"{name}.fire{i + 1}", c_in, c_out, rng)
            )
            c_in = c_out
        self.fc = Linear(store, f"{name}.fc", c_in * hw * hw,
                         3 * cfg.n_points, rng)
        self.flat_len = c_in * hw * hw

    def __call__(self, z: Tensor, training: bool) -> Tensor:
        n = z.shape[0]
        hw = POINT_SEED_HW
        x = ops.reshape(z, (n, self.seed_channels, hw, hw))
        for fire in self.fires:
            x = fire(x)
        out = self.fc(ops.reshape(x, (n, self.flat_len)))
        return ops.reshape(out, (n, self.n_points, 3))
