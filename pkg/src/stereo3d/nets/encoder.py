"""Shared image encoder for the reconstruction branch.

One encoder object serves both views: calling it twice builds two graphs
over the same registered parameters, which is the weight-sharing contract.
Input is RGB stacked with the view's own disparity map (normalized to
[0, 1] by the configured disparity range), or plain RGB when the disparity
path is ablated. Five stride-2 residual blocks reduce the image to a small
map that a final linear layer flattens into the fixed-length feature
vector. The activation after the third block (1/8 resolution) is also
returned; it feeds the cost volume.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import ParameterStore, Tensor, ops
from .config import ScaleConfig
from .layers import Linear, ResidualBlock


def _down(n: int) -> int:
    return (n - 1) // 2 + 1


class RecEncoder:
    def __init__(self, store: ParameterStore, cfg: ScaleConfig,
                 rng: np.random.Generator, in_channels: int = 4,
                 name: str = "encoder"):
        chans = cfg.encoder_channels
        self.blocks = []
        c_in = in_channels
        for i, c_out in enumerate(chans):
            self.blocks.append(
                ResidualBlock(store, f"{name}.block{i + 1}", c_in, c_out, rng,
                              stride=2)
            )
            c_in = c_out
        h, w = cfg.input_size
        for _ in chans:
            h, w = _down(h), _down(w)
        self.flat_len = chans[-1] * h * w
        self.fc = Linear(store, f"{name}.fc", self.flat_len, cfg.feature_len, rng)
        self.in_channels = in_channels

    def __call__(self, x: Tensor, training: bool) -> tuple[Tensor, Tensor]:
        if x.data.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(
                f"expected [N,{self.in_channels},H,W] input, got {x.shape}"
            )
        tap = None
        for i, block in enumerate(self.blocks):
            x = block(x, training)
            if i == 2:
                tap = x
        n = x.shape[0]
        vec = self.fc(ops.reshape(x, (n, self.flat_len)))
        return vec, tap
