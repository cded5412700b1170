"""Area-weighted surface point sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh


@dataclass
class PointCloud:
    points: np.ndarray  # [n, 3] float64

    def __post_init__(self):
        self.points = np.asarray(self.points, np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point cloud contains non-finite coordinates")

    def __len__(self):
        return len(self.points)


def sample_surface(mesh: Mesh, n: int, seed) -> PointCloud:
    """n points, triangles weighted by area, uniform within each triangle.

    ``seed`` may be anything np.random.default_rng accepts (int, SeedSequence).
    """
    if n < 1:
        raise ValueError("need at least one sample")
    if len(mesh.triangles) == 0:
        raise ValueError("cannot sample an empty mesh")
    rng = np.random.default_rng(seed)
    areas = mesh.areas()
    probs = areas / areas.sum()
    idx = rng.choice(len(probs), size=n, p=probs)
    c = mesh.corners()[idx]
    u = rng.random(n)
    v = rng.random(n)
    # fold the unit square onto the triangle's barycentric domain
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    pts = c[:, 0] + u[:, None] * (c[:, 1] - c[:, 0]) + v[:, None] * (c[:, 2] - c[:, 0])
    return PointCloud(pts)
