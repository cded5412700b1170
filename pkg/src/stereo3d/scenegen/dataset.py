"""Sample generation: renders, ground truth, and the on-disk container.

Each sample gets an independent RNG stream derived from (global seed,
sample index), so generation is order-independent and reproducible
byte-for-byte. The disparity maps are computed from the float32 depth maps
that get stored, which keeps the depth/disparity identity bit-exact for
anyone re-deriving it from the files.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import formats
from .camera import StereoCamera
from .geometry import compute_occlusion, depth_to_disparity
from .mesh import KINDS, Mesh, make_primitive
from .points import PointCloud, sample_surface
from .render import Lighting, Pose, render_stereo
from .voxel import VoxelGrid, voxelize

COMPOSITE_KINDS = ("table", "chair", "lamp")

WORLD_SCALE_M = 0.35
DISTANCE_RANGE_M = (1.15, 1.6)
ELEVATION_RANGE_DEG = (-20.0, 30.0)


@dataclass
class StereoSample:
    left_rgb: np.ndarray
    right_rgb: np.ndarray
    depth_l: np.ndarray
    depth_r: np.ndarray
    disp_l: np.ndarray
    disp_r: np.ndarray
    occl_l: np.ndarray
    occl_r: np.ndarray
    voxels: VoxelGrid
    points: PointCloud
    camera: StereoCamera
    meta: dict


def _rotate_toward(d: np.ndarray, rng: np.random.Generator, max_deg: float) -> np.ndarray:
    """Tilt a unit vector by a random angle up to max_deg."""
    axis = rng.standard_normal(3)
    axis -= axis @ d * d
    n = np.linalg.norm(axis)
    if n < 1e-12:
        return d
    axis /= n
    ang = np.deg2rad(rng.uniform(-max_deg, max_deg))
    return d * np.cos(ang) + np.cross(axis, d) * np.sin(ang)


def build_sample(
    global_seed: int,
    index: int,
    camera: StereoCamera,
    voxel_res: int = 32,
    n_gt: int = 16384,
    jitter: bool = False,
    kinds=None,
) -> StereoSample:
    """Deterministically build one sample (independent of other indices)."""
    kinds = tuple(kinds) if kinds else KINDS
    ss = np.random.SeedSequence(entropy=(int(global_seed), int(index)))
    shape_ss, pose_ss, light_ss, point_ss = ss.spawn(4)
    shape_rng = np.random.default_rng(shape_ss)
    kind = kinds[int(shape_rng.integers(len(kinds)))]
    mesh = make_primitive(kind, seed=shape_ss.spawn(1)[0])

    pose_rng = np.random.default_rng(pose_ss)
    pose = Pose(
        azimuth_deg=float(pose_rng.uniform(0.0, 360.0)),
        elevation_deg=float(pose_rng.uniform(*ELEVATION_RANGE_DEG)),
        distance_m=float(pose_rng.uniform(*DISTANCE_RANGE_M)),
        scale_m=WORLD_SCALE_M,
        offset_x_m=camera.baseline_m / 2.0,
    )

    lighting = Lighting()
    light_rng = np.random.default_rng(light_ss)
    if jitter:
        mesh = Mesh(
            mesh.vertices,
            mesh.triangles,
            np.clip(mesh.albedo * light_rng.uniform(0.8, 1.2, 3), 0.0, 1.0),
        )
        lighting = Lighting(
            direction=_rotate_toward(lighting.direction, light_rng, 15.0),
            intensity=float(light_rng.uniform(0.7, 1.3)),
        )

    left_rgb, right_rgb, depth_l, depth_r = render_stereo(mesh, pose, camera, lighting)

    depth_l = depth_l.astype(np.float32)
    depth_r = depth_r.astype(np.float32)
    disp_l = depth_to_disparity(depth_l, camera)
    disp_r = depth_to_disparity(depth_r, camera)
    occl_l, occl_r = compute_occlusion(disp_l, disp_r)

    voxels = voxelize(mesh, voxel_res)
    points = sample_surface(mesh, n_gt, point_ss)

    meta = {
        "kind": kind,
        "global_seed": int(global_seed),
        "index": int(index),
        "azimuth_deg": pose.azimuth_deg,
        "elevation_deg": pose.elevation_deg,
        "distance_m": pose.distance_m,
        "scale_m": pose.scale_m,
        "jitter": int(jitter),
        "focal_length_mm": camera.focal_length_mm,
        "sensor_width_mm": camera.sensor_width_mm,
        "baseline_mm": camera.baseline_mm,
        "image_width_px": camera.image_width_px,
        "image_height_px": camera.image_height_px,
        "voxel_res": voxel_res,
        "n_gt": n_gt,
    }
    return StereoSample(
        left_rgb, right_rgb, depth_l, depth_r, disp_l, disp_r,
        occl_l, occl_r, voxels, points, camera, meta,
    )


def sample_dir_name(index: int) -> str:
    return f"sample_{index:06d}"


def save_sample(sample: StereoSample, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    formats.write_ppm(os.path.join(out_dir, "left.ppm"), sample.left_rgb)
    formats.write_ppm(os.path.join(out_dir, "right.ppm"), sample.right_rgb)
    formats.write_ssdm(os.path.join(out_dir, "depth_l.ssdm"), sample.depth_l)
    formats.write_ssdm(os.path.join(out_dir, "depth_r.ssdm"), sample.depth_r)
    formats.write_ssdm(os.path.join(out_dir, "disp_l.ssdm"), sample.disp_l)
    formats.write_ssdm(os.path.join(out_dir, "disp_r.ssdm"), sample.disp_r)
    formats.write_ssbm(os.path.join(out_dir, "occl_l.ssbm"), sample.occl_l)
    formats.write_ssbm(os.path.join(out_dir, "occl_r.ssbm"), sample.occl_r)
    formats.write_ssvx(os.path.join(out_dir, "voxels.ssvx"), sample.voxels.occupancy)
    formats.write_ply(os.path.join(out_dir, "points.ply"), sample.points.points)
    formats.write_meta(os.path.join(out_dir, "meta.txt"), sample.meta)


def load_sample(sample_dir: str) -> StereoSample:
    meta = formats.read_meta(os.path.join(sample_dir, "meta.txt"))
    camera = StereoCamera(
        focal_length_mm=float(meta["focal_length_mm"]),
        sensor_width_mm=float(meta["sensor_width_mm"]),
        baseline_mm=float(meta["baseline_mm"]),
        image_width_px=int(meta["image_width_px"]),
        image_height_px=int(meta["image_height_px"]),
    )
    voxels = formats.read_ssvx(os.path.join(sample_dir, "voxels.ssvx"))
    return StereoSample(
        left_rgb=formats.read_ppm(os.path.join(sample_dir, "left.ppm")),
        right_rgb=formats.read_ppm(os.path.join(sample_dir, "right.ppm")),
        depth_l=formats.read_ssdm(os.path.join(sample_dir, "depth_l.ssdm")),
        depth_r=formats.read_ssdm(os.path.join(sample_dir, "depth_r.ssdm")),
        disp_l=formats.read_ssdm(os.path.join(sample_dir, "disp_l.ssdm")),
        disp_r=formats.read_ssdm(os.path.join(sample_dir, "disp_r.ssdm")),
        occl_l=formats.read_ssbm(os.path.join(sample_dir, "occl_l.ssbm")),
        occl_r=formats.read_ssbm(os.path.join(sample_dir, "occl_r.ssbm")),
        voxels=VoxelGrid(voxels.shape[0], voxels),
        points=PointCloud(formats.read_ply(os.path.join(sample_dir, "points.ply"))),
        camera=camera,
        meta=meta,
    )


def generate_dataset(
    out_dir: str,
    count: int,
    seed: int,
    camera: StereoCamera | None = None,
    voxel_res: int = 32,
    n_gt: int = 16384,
    jitter: bool = False,
    kinds=None,
    threads: int = 1,
) -> str:
    """Write ``count`` samples plus a manifest; returns the manifest path.

    Each sample depends only on (seed, index), so the thread count changes
    wall time but never the bytes on disk.
    """
    camera = camera or StereoCamera()
    os.makedirs(out_dir, exist_ok=True)

    def build_one(i: int) -> str:
        try:
            sample = build_sample(seed, i, camera, voxel_res, n_gt, jitter, kinds)
            name = sample_dir_name(i)
            save_sample(sample, os.path.join(out_dir, name))
            return name
        except OSError as e:
            raise OSError(f"failed writing sample {i}: {e}") from e

    if threads > 1 and count > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            names = list(pool.map(build_one, range(count)))
    else:
        names = [build_one(i) for i in range(count)]
    manifest = os.path.join(out_dir, "manifest.txt")
    with open(manifest, "w") as f:
        for name in names:
            f.write(name + "\n")
    return manifest


def read_manifest(manifest_path: str) -> list[str]:
    base = os.path.dirname(manifest_path)
    with open(manifest_path) as f:
        return [os.path.join(base, line.strip()) for line in f if line.strip()]
