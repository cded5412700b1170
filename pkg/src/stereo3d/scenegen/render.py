"""Software rasterizer for rectified stereo pairs.

Perspective projection plus z-buffering, flat Lambertian shading per face.
Face colors are computed once and shared by both views, so on interior
pixels the right image is exactly the left image translated by the
disparity. Depth interpolation is perspective-correct (1/z), with an exact
short-circuit when all three vertex depths are equal so fronto-parallel
faces produce bit-exact constant depth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import StereoCamera
from .mesh import Mesh

MIN_DEPTH_M = 0.2


@dataclass(frozen=True)
class Pose:
    """Object placement: rotation (degrees), then scale, then camera-frame offset.

    offset_x_m shifts the object along the baseline; half the baseline keeps
    it centered between the two views.
    """

    azimuth_deg: float = 0.0
    elevation_deg: float = 0.0
    distance_m: float = 1.3
    scale_m: float = 0.35
    offset_x_m: float = 0.0

    def matrix(self) -> np.ndarray:
        az = np.deg2rad(self.azimuth_deg)
        el = np.deg2rad(self.elevation_deg)
        r_az = np.array(
            [[np.cos(az), 0, np.sin(az)], [0, 1, 0], [-np.sin(az), 0, np.cos(az)]]
        )
        r_el = np.array(
            [[1, 0, 0], [0, np.cos(el), -np.sin(el)], [0, np.sin(el), np.cos(el)]]
        )
        # 180-degree turn about x maps the object's y-up frame into the
        # camera's y-down frame without mirroring
        r_flip = np.diag([1.0, -1.0, -1.0])
        return r_flip @ r_el @ r_az

    def apply(self, vertices: np.ndarray) -> np.ndarray:
        v = np.asarray(vertices, np.float64) @ self.matrix().T * self.scale_m
        v[:, 0] += self.offset_x_m
        v[:, 2] += self.distance_m
        return v


def _default_light_dir():
    d = np.array([-0.3, -0.7, 0.55])
    return d / np.linalg.norm(d)


@dataclass
class Lighting:
    direction: np.ndarray = field(default_factory=_default_light_dir)
    ambient: float = 0.35
    diffuse: float = 0.65
    intensity: float = 1.0
    background: tuple = (0.5, 0.5, 0.5)


def _face_colors(verts: np.ndarray, mesh: Mesh, light: Lighting) -> np.ndarray:
    c = verts[mesh.triangles]
    n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    n = n / np.where(norm > 0, norm, 1.0)
    d = np.asarray(light.direction, np.float64)
    d = d / np.linalg.norm(d)
    # two-sided lambert keeps shading independent of which camera looks at
    # the face, which the left/right translation identity relies on
    lam = np.abs(n @ d)
    shade = np.clip((light.ambient + light.diffuse * lam) * light.intensity, 0.0, 1.0)
    return np.clip(mesh.albedo * shade[:, None], 0.0, 1.0)


def _rasterize(
    verts: np.ndarray,
    tris: np.ndarray,
    colors: np.ndarray,
    camera: StereoCamera,
    offset_x_m: float,
    background,
) -> tuple[np.ndarray, np.ndarray]:
    w, h = camera.image_width_px, camera.image_height_px
    rgb = np.empty((h, w, 3), np.float64)
    rgb[:] = np.asarray(background, np.float64)
    depth = np.full((h, w), np.inf)
    if len(tris) == 0:
        return rgb, depth

    f = camera.focal_px
    z = verts[:, 2]
    u = camera.cx + f * (verts[:, 0] - offset_x_m) / z
    v = camera.cy + f * verts[:, 1] / z

    for t in range(len(tris)):
        i0, i1, i2 = tris[t]
        u0, u1, u2 = u[i0], u[i1], u[i2]
        v0, v1, v2 = v[i0], v[i1], v[i2]
        area2 = (u1 - u0) * (v2 - v0) - (v1 - v0) * (u2 - u0)
        if area2 == 0.0:
            continue
        x_lo = max(int(np.ceil(min(u0, u1, u2) - 0.5)), 0)
        x_hi = min(int(np.floor(max(u0, u1, u2) - 0.5)), w - 1)
        y_lo = max(int(np.ceil(min(v0, v1, v2) - 0.5)), 0)
        y_hi = min(int(np.floor(max(v0, v1, v2) - 0.5)), h - 1)
        if x_lo > x_hi or y_lo > y_hi:
            continue
        px = np.arange(x_lo, x_hi + 1) + 0.5
        py = (np.arange(y_lo, y_hi + 1) + 0.5)[:, None]
        e0 = (u2 - u1) * (py - v1) - (v2 - v1) * (px - u1)
        e1 = (u0 - u2) * (py - v2) - (v0 - v2) * (px - u2)
        e2 = (u1 - u0) * (py - v0) - (v1 - v0) * (px - u0)
        if area2 > 0:
            inside = (e0 >= 0) & (e1 >= 0) & (e2 >= 0)
        else:
            inside = (e0 <= 0) & (e1 <= 0) & (e2 <= 0)
        if not inside.any():
            continue
        z0, z1, z2 = z[i0], z[i1], z[i2]
        if z0 == z1 and z1 == z2:
            zp = np.full(inside.shape, z0)
        else:
            l0, l1, l2 = e0 / area2, e1 / area2, e2 / area2
            with np.errstate(divide="ignore", invalid="ignore"):
                zp = 1.0 / (l0 / z0 + l1 / z1 + l2 / z2)
        tile = depth[y_lo : y_hi + 1, x_lo : x_hi + 1]
        win = inside & (zp < tile)
        if not win.any():
            continue
        tile[win] = zp[win]
        ctile = rgb[y_lo : y_hi + 1, x_lo : x_hi + 1]
        ctile[win] = colors[t]
    return rgb, depth


def render_stereo(
    mesh: Mesh, pose: Pose, camera: StereoCamera, lighting: Lighting | None = None
):
    """Render both views; returns (left_rgb, right_rgb, depth_l, depth_r).

    Images are [H, W, 3] in [0, 1]; depths are eye-space z in meters with
    +inf on background pixels.
    """
    lighting = lighting or Lighting()
    verts = pose.apply(mesh.vertices)
    if len(mesh.triangles) and verts[:, 2].min() <= MIN_DEPTH_M:
        raise ValueError(
            f"object too close or behind camera: min depth {verts[:, 2].min():.3f} m"
        )
    colors = _face_colors(verts, mesh, lighting)
    left_rgb, depth_l = _rasterize(verts, mesh.triangles, colors, camera, 0.0, lighting.background)
    right_rgb, depth_r = _rasterize(
        verts, mesh.triangles, colors, camera, camera.baseline_m, lighting.background
    )
    return left_rgb, right_rgb, depth_l, depth_r
