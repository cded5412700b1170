"""Rectified stereo camera model.

Both cameras share orientation; the right camera sits at +baseline along
the camera x-axis, so epipolar lines are horizontal scanlines and disparity
is a pure horizontal shift. Camera frame: x right, y down, z forward.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class StereoCamera:
    focal_length_mm: float = 35.0
    sensor_width_mm: float = 32.0
    baseline_mm: float = 130.0
    image_width_px: int = 224
    image_height_px: int = 224

    def __post_init__(self):
        if self.focal_length_mm <= 0 or self.sensor_width_mm <= 0:
            raise ValueError("focal length and sensor width must be positive")
        if self.baseline_mm <= 0:
            raise ValueError("baseline must be positive")
        if self.image_width_px < 1 or self.image_height_px < 1:
            raise ValueError("image dimensions must be positive")

    @property
    def focal_px(self) -> float:
        return self.focal_length_mm / self.sensor_width_mm * self.image_width_px

    @property
    def baseline_m(self) -> float:
        return self.baseline_mm / 1000.0

    @property
    def cx(self) -> float:
        return self.image_width_px / 2.0

    @property
    def cy(self) -> float:
        return self.image_height_px / 2.0
