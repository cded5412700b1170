"""Cost-volume construction and the correlation network that digests it.

The cost volume stacks left features against right features shifted by
each candidate disparity (zero-padded where the shift leaves the image),
giving a 5-D tensor indexed [batch, channel, shift, y, x]. It is assembled
from concat/crop graph ops, so gradients flow back into both feature maps
and the values equal the per-pixel definition bit-exactly.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import ParameterStore, Tensor, ops
from .config import ScaleConfig
from .layers import BatchNorm, Conv, Linear

N_CORR_STAGES = 9


def build_cost_volume(left: Tensor, right: Tensor, max_shift: int,
                      shift_interval: int = 1) -> Tensor:
    """Stack left features with right features shifted by 0, s, 2s, ...

    out[n, :, i, y, x] = concat(left[n, :, y, x], right[n, :, y, x - i*s]),
    zero where the shifted column index is negative. max_shift counts in
    feature-map pixels (already divided by the encoder downsampling).
    """
    if not isinstance(left, Tensor):
        left = Tensor(np.asarray(left))
    if not isinstance(right, Tensor):
        right = Tensor(np.asarray(right))
    if left.shape != right.shape or left.data.ndim != 4:
        raise ValueError(
            f"feature maps must share an [N,C,H,W] shape: {left.shape} vs {right.shape}"
        )
    if max_shift < 1:
        raise ValueError(f"max_shift must be >= 1 at feature scale, got {max_shift}")
    if shift_interval < 1:
        raise ValueError(f"shift_interval must be >= 1, got {shift_interval}")
    n, c, h, w = left.shape
    slices = []
    for i in range(max_shift // shift_interval + 1):
        d = i * shift_interval
        if d == 0:
            shifted = right
        elif d < w:
            pad = Tensor(np.zeros((n, c, h, d), left.data.dtype))
            shifted = ops.concat([pad, ops.crop_spatial(right, 0, h, 0, w - d)],
                                 axis=3)
        else:
            shifted = Tensor(np.zeros((n, c, h, w), left.data.dtype))
        pair = ops.concat([left, shifted], axis=1)
        slices.append(ops.reshape(pair, (n, 2 * c, 1, h, w)))
    return ops.concat(slices, axis=2)


class CorrNet:
    """Nine 3-D conv stages, two 1x1 reductions, and a linear projection."""

    def __init__(self, store: ParameterStore, cfg: ScaleConfig,
                 rng: np.random.Generator, name: str = "corrnet"):
        cc = cfg.corr_channels
        c_in = 2 * cfg.tap_channels
        self.stages = []
        for i in range(N_CORR_STAGES):
            kernel = 1 if i == 0 else 3
            conv = Conv(store, f"{name}.stage{i + 1}.conv", c_in, cc, kernel,
                        rng, nd=3, padding=kernel // 2)
            bn = BatchNorm(store, f"{name}.stage{i + 1}.bn", cc)
            self.stages.append((conv, bn))
            c_in = cc
        self.reduce3d = Conv(store, f"{name}.reduce3d.conv", cc, 1, 1, rng, nd=3)
        self.reduce3d_bn = BatchNorm(store, f"{name}.reduce3d.bn", 1)
        # spatial size of the tap: three stride-2 stages into the encoder
        h, w = cfg.input_size
        for _ in range(3):
            h, w = (h - 1) // 2 + 1, (w - 1) // 2 + 1
        self.reduce2d = Conv(store, f"{name}.reduce2d.conv", cfg.shift_levels, 1,
                             1, rng)
        self.reduce2d_bn = BatchNorm(store, f"{name}.reduce2d.bn", 1)
        self.fc = Linear(store, f"{name}.fc", h * w, cfg.corr_len, rng)
        self.flat_hw = (h, w)

    def __call__(self, cv: Tensor, training: bool) -> Tensor:
        x = cv
        for conv, bn in self.stages:
            x = ops.relu(bn(conv(x), training))
        x = ops.relu(self.reduce3d_bn(self.reduce3d(x), training))
        n, _, d, h, w = x.shape
        x = ops.reshape(x, (n, d, h, w))
        x = ops.relu(self.reduce2d_bn(self.reduce2d(x), training))
        return self.fc(ops.reshape(x, (n, h * w)))
