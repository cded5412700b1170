"""Depth/disparity conversion and occlusion detection for rectified pairs."""

from __future__ import annotations

import numpy as np

from .camera import StereoCamera


def depth_to_disparity(depth: np.ndarray, camera: StereoCamera) -> np.ndarray:
    """d = focal_px * baseline_m / depth; +inf depth maps to disparity 0.

    Whoever needs the ground-truth identity to hold bit-exactly must call
    this on the same depth array (same dtype) that gets stored.
    """
    depth = np.asarray(depth)
    finite = np.isfinite(depth)
    if np.any(finite & (depth <= 0)):
        raise ValueError("non-positive finite depth")
    disp = np.zeros_like(depth)
    scale = depth.dtype.type(camera.focal_px * camera.baseline_m)
    disp[finite] = scale / depth[finite]
    return disp


def compute_occlusion(disp_l: np.ndarray, disp_r: np.ndarray):
    """Left-right consistency masks; True marks occluded pixels.

    Left pixel (x, y) is occluded iff its match x - d falls off the image
    or the disparities disagree by more than 1 px at the (rounded) match
    position. The right mask mirrors the construction with x + d.
    """
    disp_l = np.asarray(disp_l, np.float64)
    disp_r = np.asarray(disp_r, np.float64)
    if disp_l.shape != disp_r.shape:
        raise ValueError(f"shape mismatch: {disp_l.shape} vs {disp_r.shape}")
    h, w = disp_l.shape
    xs = np.arange(w)[None, :]

    def one_side(src, dst, sign):
        target = xs + sign * src
        idx = np.rint(target).astype(np.int64)
        occl = (target < 0) | (target >= w) | (idx < 0) | (idx > w - 1)
        safe = np.clip(idx, 0, w - 1)
        other = np.take_along_axis(dst, safe, axis=1)
        occl |= np.abs(src - other) > 1.0
        return occl

    return one_side(disp_l, disp_r, -1), one_side(disp_r, disp_l, +1)
