"""Scale configuration: one knob set that sizes every network consistently.

The same architecture runs at two bundled presets: "paper" (the full-size
dimensions) and "desk" (small enough to train on a laptop CPU in minutes).
Derived quantities (channel ladders, seed resolutions, feature-level shift
counts) are computed here so the network modules stay arithmetic-free.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

# the reconstruction volume decoder upsamples x16 from its seed resolution
VOLUME_UPSAMPLE = 16
# the point decoder flattens a 4x4 seed map
POINT_SEED_HW = 4
# the encoder tap feeding the cost volume sits at 1/8 input resolution
TAP_DOWNSAMPLE = 8


@dataclass(frozen=True)
class ScaleConfig:
    input_size: tuple[int, int] = (137, 137)
    base_channels: int = 32
    feature_len: int = 8192
    corr_len: int = 4096
    volume_res: int = 32
    n_points: int = 1024
    max_disparity: int = 48
    shift_interval: int = 1

    def __post_init__(self):
        h, w = self.input_size
        if h < 32 or w < 32:
            raise ValueError(f"input size too small: {self.input_size}")
        for field in ("base_channels", "feature_len", "corr_len", "volume_res",
                      "n_points", "max_disparity", "shift_interval"):
            if getattr(self, field) < 1:
                raise ValueError(f"{field} must be positive")
        if self.volume_res % VOLUME_UPSAMPLE != 0:
            raise ValueError(
                f"volume_res {self.volume_res} not reachable by the decoder's "
                f"x{VOLUME_UPSAMPLE} upsampling chain"
            )
        if self.feature_max_shift < 1:
            raise ValueError(
                f"max_disparity {self.max_disparity} vanishes at the "
                f"1/{TAP_DOWNSAMPLE} feature scale"
            )

    @property
    def disp_channels(self) -> int:
        """Base width of the disparity network (deliberately narrow)."""
        return max(self.base_channels // 2, 4)

    @property
    def encoder_channels(self) -> tuple[int, ...]:
        c = self.base_channels
        return (c, 2 * c, 4 * c, 8 * c, 8 * c)

    @property
    def tap_channels(self) -> int:
        """Channels of the encoder activation tapped for the cost volume."""
        return self.encoder_channels[2]

    @property
    def corr_channels(self) -> int:
        return 4 * self.base_channels

    @property
    def feature_max_shift(self) -> int:
        """Largest disparity shift at the tap's feature resolution."""
        return round(self.max_disparity / TAP_DOWNSAMPLE)

    @property
    def shift_levels(self) -> int:
        """Number of cost-volume slices (shift zero included)."""
        return self.feature_max_shift // self.shift_interval + 1

    @property
    def volume_seed(self) -> int:
        return self.volume_res // VOLUME_UPSAMPLE


PRESETS = {
    "paper": ScaleConfig(),
    "desk": ScaleConfig(
        input_size=(64, 64),
        base_channels=16,
        feature_len=256,
        corr_len=128,
        volume_res=16,
        n_points=256,
        max_disparity=24,
    ),
}


def get_scale(name: str, **overrides) -> ScaleConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown scale preset {name!r}; have {sorted(PRESETS)}")
    cfg = PRESETS[name]
    return replace(cfg, **overrides) if overrides else cfg
