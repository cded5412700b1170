"""Solid voxelization of canonical-frame meshes.

Surface cells come from a conservative separating-axis triangle/box test;
the interior is then filled by flood-filling the empty space from the grid
boundary and occupying whatever the flood cannot reach. Triangles that lie
exactly on a grid plane (axis-aligned faces of boxes) would conservatively
mark the cells on both sides, bloating the shape by one layer; those are
detected and assigned only to the cell on their interior (anti-normal)
side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh


@dataclass
class VoxelGrid:
    resolution: int
    occupancy: np.ndarray  # [R, R, R] bool or float probabilities, indexed [x, y, z]

    def __post_init__(self):
        occ = np.asarray(self.occupancy)
        r = self.resolution
        if occ.shape != (r, r, r):
            raise ValueError(f"occupancy shape {occ.shape} vs resolution {r}")
        if occ.dtype != bool:
            occ = occ.astype(np.float64)
            if occ.min() < 0.0 or occ.max() > 1.0:
                raise ValueError("probabilities must lie in [0, 1]")
        self.occupancy = occ

    def count(self) -> int:
        return int(np.count_nonzero(self.occupancy) if self.occupancy.dtype == bool
                   else np.count_nonzero(self.occupancy > 0.5))


def _tri_box_overlap(tri: np.ndarray, centers: np.ndarray, half: float) -> np.ndarray:
    """Closed SAT test of one triangle against many cubes of half-size half.

    tri: [3, 3]; centers: [n, 3]. Touching counts as overlap.
    """
    v = tri[None, :, :] - centers[:, None, :]  # [n, 3verts, 3]
    ok = np.ones(len(centers), bool)

    # box axes
    for a in range(3):
        ok &= ~((v[:, :, a].min(1) > half) | (v[:, :, a].max(1) < -half))

    e = np.array([tri[1] - tri[0], tri[2] - tri[1], tri[0] - tri[2]])
    n = np.cross(e[0], e[1])
    # triangle plane
    s = (v[:, 0, :] * n[None, :]).sum(1)
    r = half * np.abs(n).sum()
    ok &= np.abs(s) <= r

    # edge cross unit-axis tests
    for ei in range(3):
        for a in range(3):
            u = np.zeros(3)
            u[a] = 1.0
            ax = np.cross(u, e[ei])
            if not ax.any():
                continue
            p = v @ ax  # [n, 3verts]
            r = half * np.abs(ax).sum()
            ok &= ~((p.min(1) > r) | (p.max(1) < -r))
    return ok


def _fill_interior(occ: np.ndarray) -> np.ndarray:
    """Occupy every empty cell not 6-connected to the grid boundary."""
    open_ = ~occ
    outside = np.zeros_like(occ)
    frontier = np.zeros_like(occ)
    for a in range(3):
        sl0 = [slice(None)] * 3
        sl0[a] = 0
        sl1 = [slice(None)] * 3
        sl1[a] = -1
        frontier[tuple(sl0)] |= open_[tuple(sl0)]
        frontier[tuple(sl1)] |= open_[tuple(sl1)]
    while frontier.any():
        outside |= frontier
        grow = np.zeros_like(occ)
        grow[1:, :, :] |= outside[:-1, :, :]
        grow[:-1, :, :] |= outside[1:, :, :]
        grow[:, 1:, :] |= outside[:, :-1, :]
        grow[:, :-1, :] |= outside[:, 1:, :]
        grow[:, :, 1:] |= outside[:, :, :-1]
        grow[:, :, :-1] |= outside[:, :, 1:]
        frontier = grow & open_ & ~outside
    return occ | (~occ & ~outside)


def _mark_axis_coplanar(tri: np.ndarray, axis: int, occ: np.ndarray, r: int) -> bool:
    """Handle a triangle lying exactly on a grid plane; True if handled."""
    coord = tri[0, axis]
    plane = (coord + 0.5) * r
    k = round(plane)
    if plane != k:
        return False  # coplanar but between grid planes; regular SAT is fine
    e0, e1 = tri[1] - tri[0], tri[2] - tri[0]
    normal_component = np.cross(e0, e1)[axis]
    if normal_component == 0:
        return False
    layer = k - 1 if normal_component > 0 else k
    if not 0 <= layer < r:
        return True  # face on the outer cube boundary pointing outward
    a1, a2 = [a for a in range(3) if a != axis]

    tri2 = tri[:, [a1, a2]]
    lo = np.floor((tri2.min(0) + 0.5) * r).astype(int)
    hi = np.floor((tri2.max(0) + 0.5) * r).astype(int)
    lo = np.clip(lo, 0, r - 1)
    hi = np.clip(hi, 0, r - 1)
    i1, i2 = np.meshgrid(
        np.arange(lo[0], hi[0] + 1), np.arange(lo[1], hi[1] + 1), indexing="ij"
    )
    i1, i2 = i1.ravel(), i2.ravel()
    centers2 = np.stack([(i1 + 0.5) / r - 0.5, (i2 + 0.5) / r - 0.5], 1)
    hit = _tri_square_overlap(tri2, centers2, 0.5 / r)
    idx = [None, None, None]
    idx[axis] = np.full(hit.sum(), layer)
    idx[a1] = i1[hit]
    idx[a2] = i2[hit]
    occ[idx[0], idx[1], idx[2]] = True
    return True


def _tri_square_overlap(tri2: np.ndarray, centers2: np.ndarray, half: float) -> np.ndarray:
    """Open 2-D SAT of a triangle against many axis-aligned squares.

    Open (touching does not count) because this decides in-plane extent for
    faces lying on a grid plane: an edge running exactly along a cell line
    has zero area in the far cell and must not mark it.
    """
    v = tri2[None, :, :] - centers2[:, None, :]
    ok = np.ones(len(centers2), bool)
    for a in range(2):
        ok &= ~((v[:, :, a].min(1) >= half) | (v[:, :, a].max(1) <= -half))
    edges = [tri2[1] - tri2[0], tri2[2] - tri2[1], tri2[0] - tri2[2]]
    for e in edges:
        ax = np.array([-e[1], e[0]])
        if not ax.any():
            continue
        p = v @ ax
        r = half * np.abs(ax).sum()
        ok &= ~((p.min(1) >= r) | (p.max(1) <= -r))
    return ok


def voxelize(mesh: Mesh, resolution: int) -> VoxelGrid:
    """Occupancy of the canonical cube [-0.5, 0.5]^3 at the given resolution."""
    r = int(resolution)
    if r < 1:
        raise ValueError("resolution must be >= 1")
    occ = np.zeros((r, r, r), bool)
    if len(mesh.triangles) == 0:
        return VoxelGrid(r, occ)
    lo, hi = mesh.bounds()
    if lo.min() < -0.5 - 1e-9 or hi.max() > 0.5 + 1e-9:
        raise ValueError("mesh must lie inside the canonical unit cube")
    half = 0.5 / r
    corners = mesh.corners()
    for t in range(len(corners)):
        tri = corners[t]
        handled = False
        for axis in range(3):
            if tri[0, axis] == tri[1, axis] == tri[2, axis]:
                handled = _mark_axis_coplanar(tri, axis, occ, r)
                break
        if handled:
            continue
        t_lo = np.clip(np.floor((tri.min(0) + 0.5) * r).astype(int), 0, r - 1)
        t_hi = np.clip(np.floor((tri.max(0) + 0.5) * r).astype(int), 0, r - 1)
        ix, iy, iz = np.meshgrid(
            np.arange(t_lo[0], t_hi[0] + 1),
            np.arange(t_lo[1], t_hi[1] + 1),
            np.arange(t_lo[2], t_hi[2] + 1),
            indexing="ij",
        )
        ix, iy, iz = ix.ravel(), iy.ravel(), iz.ravel()
        centers = np.stack([(ix + 0.5) / r - 0.5, (iy + 0.5) / r - 0.5, (iz + 0.5) / r - 0.5], 1)
        hit = _tri_box_overlap(tri, centers, half)
        occ[ix[hit], iy[hit], iz[hit]] = True
    return VoxelGrid(r, _fill_interior(occ))
