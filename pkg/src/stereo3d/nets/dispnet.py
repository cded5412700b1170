"""Bidirectional disparity network.

Both views enter as one 6-channel image and both disparity maps leave in a
single forward pass. The body is a small U-Net: three stride-2 encoder
convolutions, a bottleneck, and three stride-2 transposed convolutions,
each decoder stage consuming the skip from its matching encoder scale. The
head is a 2-channel convolution (left then right disparity) clamped to be
non-negative. Inputs whose sides are not multiples of 8 are reflect-padded
internally and the output is cropped back.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import ParameterStore, Tensor, ops
from .config import ScaleConfig
from .layers import Conv, ConvTranspose, take_channel


class DispNetB:
    def __init__(self, store: ParameterStore, cfg: ScaleConfig,
                 rng: np.random.Generator, name: str = "dispnet"):
        c = cfg.disp_channels
        self.enc1 = Conv(store, f"{name}.enc1", 6, c, 3, rng, stride=2, padding=1)
        self.enc2 = Conv(store, f"{name}.enc2", c, 2 * c, 3, rng, stride=2, padding=1)
        self.enc3 = Conv(store, f"{name}.enc3", 2 * c, 4 * c, 3, rng, stride=2,
                         padding=1)
        self.bottleneck = Conv(store, f"{name}.bottleneck", 4 * c, 4 * c, 3, rng,
                               padding=1)
        self.dec3 = ConvTranspose(store, f"{name}.dec3", 8 * c, 2 * c, 4, rng,
                                  stride=2, padding=1)
        self.dec2 = ConvTranspose(store, f"{name}.dec2", 4 * c, c, 4, rng,
                                  stride=2, padding=1)
        self.dec1 = ConvTranspose(store, f"{name}.dec1", 2 * c, c, 4, rng,
                                  stride=2, padding=1)
        self.head = Conv(store, f"{name}.head", c, 2, 3, rng, padding=1)

    def __call__(self, left: Tensor, right: Tensor) -> tuple[Tensor, Tensor]:
        if left.shape != right.shape or left.data.ndim != 4 or left.shape[1] != 3:
            raise ValueError(
                f"expected matching [N,3,H,W] views: {left.shape} vs {right.shape}"
            )
        n, _, h, w = left.shape
        x = ops.concat([left, right], axis=1)
        ph, pw = (-h) % 8, (-w) % 8
        if ph or pw:
            x = ops.pad_reflect2d(x, (0, ph), (0, pw))
        s1 = ops.relu(self.enc1(x))
        s2 = ops.relu(self.enc2(s1))
        s3 = ops.relu(self.enc3(s2))
        y = ops.relu(self.bottleneck(s3))
        y = ops.relu(self.dec3(ops.concat([y, s3], axis=1)))
        y = ops.relu(self.dec2(ops.concat([y, s2], axis=1)))
        y = ops.relu(self.dec1(ops.concat([y, s1], axis=1)))
        out = ops.relu(self.head(y))
        if ph or pw:
            out = ops.crop_spatial(out, 0, h, 0, w)
        return take_channel(out, 0), take_channel(out, 1)
