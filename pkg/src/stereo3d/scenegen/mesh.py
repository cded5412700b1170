"""Triangle meshes and the procedural shape library.

Shapes are built in a canonical frame: centered at the origin, y up, the
whole object fitting the unit cube [-0.5, 0.5]^3. Composite kinds (table,
chair, lamp) assemble several boxes/cylinders with deliberately thin parts.
Every triangle carries its own albedo; a small per-triangle brightness
jitter gives flat-shaded surfaces enough texture for block matching.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MIN_TRIANGLE_AREA = 1e-12

KINDS = ("box", "sphere", "cylinder", "table", "chair", "lamp")


@dataclass
class Mesh:
    vertices: np.ndarray  # [n, 3] float64
    triangles: np.ndarray  # [m, 3] int
    albedo: np.ndarray  # [m, 3] float64 in [0, 1]

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, np.int64).reshape(-1, 3)
        self.albedo = np.asarray(self.albedo, np.float64).reshape(-1, 3)
        if len(self.albedo) != len(self.triangles):
            raise ValueError("albedo must have one color per triangle")
        if len(self.triangles):
            if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
                raise ValueError("triangle index out of range")
            if self.areas().min() <= MIN_TRIANGLE_AREA:
                raise ValueError("degenerate triangle (area <= 1e-12)")

    def corners(self) -> np.ndarray:
        """Vertex positions per triangle, [m, 3, 3]."""
        return self.vertices[self.triangles]

    def areas(self) -> np.ndarray:
        c = self.corners()
        cross = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def merge(meshes) -> Mesh:
    verts, tris, alb = [], [], []
    off = 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + off)
        alb.append(m.albedo)
        off += len(m.vertices)
    return Mesh(np.concatenate(verts), np.concatenate(tris), np.concatenate(alb))


def _translated(mesh: Mesh, offset) -> Mesh:
    return Mesh(mesh.vertices + np.asarray(offset, np.float64), mesh.triangles, mesh.albedo)


def _fit_unit_cube(mesh: Mesh) -> Mesh:
    lo, hi = mesh.bounds()
    center = (lo + hi) / 2.0
    extent = float((hi - lo).max())
    return Mesh((mesh.vertices - center) / extent, mesh.triangles, mesh.albedo)


def _albedo_for(n_tris: int, base_color, rng: np.random.Generator | None) -> np.ndarray:
    alb = np.tile(np.asarray(base_color, np.float64), (n_tris, 1))
    if rng is not None:
        # per-triangle brightness variation so flat shading is not texture-free
        alb *= rng.uniform(0.85, 1.15, (n_tris, 1))
    return np.clip(alb, 0.0, 1.0)


# ---------------------------------------------------------------------------
# atomic shapes
# ---------------------------------------------------------------------------

def box(sx: float, sy: float, sz: float, color=(0.7, 0.7, 0.7), rng=None,
        checker: int = 1) -> Mesh:
    """Axis-aligned box centered at the origin with the given edge lengths.

    checker > 1 splits every face into a checker x checker grid of quads so
    the per-triangle brightness jitter produces block-matchable texture.
    """
    if min(sx, sy, sz) <= 0:
        raise ValueError(f"box extents must be positive: {(sx, sy, sz)}")
    if checker < 1:
        raise ValueError("checker must be >= 1")
    hx, hy, hz = sx / 2.0, sy / 2.0, sz / 2.0
    if checker == 1:
        v = np.array(
            [
                [-hx, -hy, -hz], [hx, -hy, -hz], [hx, hy, -hz], [-hx, hy, -hz],
                [-hx, -hy, hz], [hx, -hy, hz], [hx, hy, hz], [-hx, hy, hz],
            ]
        )
        # two triangles per face, outward winding
        f = np.array(
            [
                [0, 2, 1], [0, 3, 2],  # z = -hz
                [4, 5, 6], [4, 6, 7],  # z = +hz
                [0, 1, 5], [0, 5, 4],  # y = -hy
                [3, 6, 2], [3, 7, 6],  # y = +hy
                [0, 4, 7], [0, 7, 3],  # x = -hx
                [1, 2, 6], [1, 6, 5],  # x = +hx
            ]
        )
        return Mesh(v, f, _albedo_for(len(f), color, rng))
    # each face as its own vertex grid; du x dv points along the outward normal
    faces = [
        ((hx, -hy, -hz), (0, 2 * hy, 0), (0, 0, 2 * hz)),   # x = +hx
        ((-hx, -hy, -hz), (0, 0, 2 * hz), (0, 2 * hy, 0)),  # x = -hx
        ((-hx, hy, -hz), (0, 0, 2 * hz), (2 * hx, 0, 0)),   # y = +hy
        ((-hx, -hy, -hz), (2 * hx, 0, 0), (0, 0, 2 * hz)),  # y = -hy
        ((-hx, -hy, hz), (2 * hx, 0, 0), (0, 2 * hy, 0)),   # z = +hz
        ((-hx, -hy, -hz), (0, 2 * hy, 0), (2 * hx, 0, 0)),  # z = -hz
    ]
    n = checker
    verts = []
    tris = []
    base = 0
    for origin, du, dv in faces:
        origin, du, dv = (np.asarray(a, np.float64) for a in (origin, du, dv))
        i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
        verts.append(origin + i.reshape(-1, 1) / n * du + j.reshape(-1, 1) / n * dv)
        c0 = base + i[:-1, :-1].ravel() * (n + 1) + j[:-1, :-1].ravel()
        c1, c2, c3 = c0 + n + 1, c0 + n + 2, c0 + 1  # +du, +du+dv, +dv corners
        tris.append(np.stack([c0, c1, c2], 1))
        tris.append(np.stack([c0, c2, c3], 1))
        base += (n + 1) * (n + 1)
    f = np.concatenate(tris)
    return Mesh(np.concatenate(verts), f, _albedo_for(len(f), color, rng))


def sphere(subdiv: int = 3, color=(0.7, 0.7, 0.7), rng=None) -> Mesh:
    """Icosphere of radius 0.5; subdiv quadruples the face count each level."""
    if subdiv < 0:
        raise ValueError("subdiv must be >= 0")
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        np.float64,
    )
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ]
    )
    for _ in range(subdiv):
        cache: dict[tuple[int, int], int] = {}
        verts = list(v)

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                cache[key] = len(verts)
                verts.append((verts[a] + verts[b]) / 2.0)
            return cache[key]

        out = []
        for a, b, c in f:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            out += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        v = np.array(verts)
        f = np.array(out)
    v = v / np.linalg.norm(v, axis=1, keepdims=True) * 0.5
    return Mesh(v, f, _albedo_for(len(f), color, rng))


def cylinder(
    radius: float,
    height: float,
    segments: int = 24,
    top_radius: float | None = None,
    color=(0.7, 0.7, 0.7),
    rng=None,
) -> Mesh:
    """Y-axis cylinder (or cone frustum via top_radius) centered at origin."""
    if radius <= 0 or height <= 0 or segments < 3:
        raise ValueError(f"bad cylinder params: r={radius} h={height} n={segments}")
    rt = radius if top_radius is None else top_radius
    if rt < 0 or (rt == 0 and radius == 0):
        raise ValueError("top radius must be >= 0 and not both radii zero")
    ang = np.linspace(0.0, 2.0 * np.pi, segments, endpoint=False)
    hy = height / 2.0
    bot = np.stack([radius * np.cos(ang), np.full(segments, -hy), radius * np.sin(ang)], 1)
    f = []
    if rt == 0:
        # cone: the top ring collapses to a single apex vertex
        v = np.concatenate([bot, [[0, -hy, 0]], [[0, hy, 0]]])
        cb, apex = segments, segments + 1
        for i in range(segments):
            j = (i + 1) % segments
            f += [[j, i, apex], [cb, i, j]]
    else:
        top = np.stack([rt * np.cos(ang), np.full(segments, hy), rt * np.sin(ang)], 1)
        v = np.concatenate([bot, top, [[0, -hy, 0]], [[0, hy, 0]]])
        cb, ct = 2 * segments, 2 * segments + 1
        for i in range(segments):
            j = (i + 1) % segments
            # side quad, wound outward (counter-clockwise seen from outside)
            f += [[i, segments + i, segments + j], [i, segments + j, j]]
            f.append([cb, i, j])  # bottom cap, normal -y
            f.append([ct, segments + j, segments + i])  # top cap, normal +y
    f = np.array(f)
    return Mesh(v, f, _albedo_for(len(f), color, rng))


# ---------------------------------------------------------------------------
# composite shapes (4-8 parts each, with thin sub-parts)
# ---------------------------------------------------------------------------

def _table(rng: np.random.Generator) -> Mesh:
    top_w = rng.uniform(0.8, 1.0)
    top_d = rng.uniform(0.6, 1.0)
    top_t = rng.uniform(0.04, 0.08)
    leg_h = rng.uniform(0.5, 0.8)
    leg_t = rng.uniform(0.035, 0.06)
    top_color = rng.uniform(0.45, 0.8, 3)
    leg_color = rng.uniform(0.3, 0.6, 3)
    parts = [
        _translated(box(top_w, top_t, top_d, top_color, rng, checker=4),
                    (0, leg_h + top_t / 2, 0))
    ]
    lx, lz = top_w / 2 - leg_t, top_d / 2 - leg_t
    for sx in (-1, 1):
        for sz in (-1, 1):
            parts.append(
                _translated(box(leg_t, leg_h, leg_t, leg_color, rng, checker=2),
                            (sx * lx, leg_h / 2, sz * lz))
            )
    return _fit_unit_cube(merge(parts))


def _chair(rng: np.random.Generator) -> Mesh:
    seat_w = rng.uniform(0.5, 0.7)
    seat_d = rng.uniform(0.5, 0.7)
    seat_t = rng.uniform(0.04, 0.07)
    leg_h = rng.uniform(0.4, 0.55)
    leg_t = rng.uniform(0.03, 0.05)
    back_h = rng.uniform(0.5, 0.75)
    seat_color = rng.uniform(0.4, 0.8, 3)
    leg_color = rng.uniform(0.25, 0.55, 3)
    parts = [
        _translated(box(seat_w, seat_t, seat_d, seat_color, rng, checker=4),
                    (0, leg_h + seat_t / 2, 0))
    ]
    lx, lz = seat_w / 2 - leg_t, seat_d / 2 - leg_t
    for sx in (-1, 1):
        for sz in (-1, 1):
            parts.append(
                _translated(box(leg_t, leg_h, leg_t, leg_color, rng, checker=2),
                            (sx * lx, leg_h / 2, sz * lz))
            )
    back_y = leg_h + seat_t + back_h / 2
    parts.append(
        _translated(box(seat_w, back_h, leg_t, seat_color, rng, checker=4),
                    (0, back_y, -(seat_d / 2 - leg_t / 2)))
    )
    return _fit_unit_cube(merge(parts))


def _lamp(rng: np.random.Generator) -> Mesh:
    base_r = rng.uniform(0.18, 0.28)
    base_h = rng.uniform(0.04, 0.08)
    pole_r = rng.uniform(0.02, 0.035)
    pole_h = rng.uniform(0.6, 0.9)
    shade_r = rng.uniform(0.2, 0.32)
    shade_top = shade_r * rng.uniform(0.45, 0.75)
    shade_h = rng.uniform(0.2, 0.3)
    metal = rng.uniform(0.3, 0.6, 3)
    shade_color = rng.uniform(0.5, 0.9, 3)
    parts = [
        _translated(cylinder(base_r, base_h, 20, color=metal, rng=rng), (0, base_h / 2, 0)),
        _translated(cylinder(pole_r, pole_h, 12, color=metal, rng=rng), (0, base_h + pole_h / 2, 0)),
        _translated(
            cylinder(shade_r, shade_h, 20, top_radius=shade_top, color=shade_color, rng=rng),
            (0, base_h + pole_h + shade_h / 2 - 0.02, 0),
        ),
        # small finial on top keeps the part count at 4 and adds a fine detail
        _translated(
            cylinder(pole_r * 1.2, 0.05, 10, color=metal, rng=rng),
            (0, base_h + pole_h + shade_h + 0.005, 0),
        ),
    ]
    return _fit_unit_cube(merge(parts))


def make_primitive(kind: str, params: dict | None = None, seed: int = 0) -> Mesh:
    """Build a canonical-frame shape; composites draw dimensions from seed."""
    params = dict(params or {})
    rng = np.random.default_rng(seed)
    if kind == "box":
        m = box(
            params.get("sx", 1.0), params.get("sy", 1.0), params.get("sz", 1.0),
            params.get("color", (0.7, 0.7, 0.7)), rng,
            checker=params.get("checker", 1),
        )
        return _fit_unit_cube(m)
    if kind == "sphere":
        return sphere(params.get("subdiv", 3), params.get("color", (0.7, 0.7, 0.7)), rng)
    if kind == "cylinder":
        m = cylinder(
            params.get("radius", 0.3), params.get("height", 1.0),
            params.get("segments", 24), params.get("top_radius"),
            params.get("color", (0.7, 0.7, 0.7)), rng,
        )
        return _fit_unit_cube(m)
    if kind == "table":
        return _table(rng)
    if kind == "chair":
        return _chair(rng)
    if kind == "lamp":
        return _lamp(rng)
    raise ValueError(f"unknown primitive kind {kind!r}")
