"""Sample container file formats.

Everything is byte-deterministic so regenerating a dataset with the same
seed produces identical files. Map formats store width before height:

    .ssdm   "SSDM" | u32 w | u32 h | u8 dtype(1=f32) | 3 pad | f32 LE rows
    .ssbm   "SSBM" | u32 w | u32 h | bit-packed rows (MSB first, each row
            padded to a whole byte)
    .ssvx   "SSVX" | u32 R | bit-packed occupancy, x varying fastest
    .ppm    binary P6, maxval 255
    .ply    ASCII point cloud
"""

from __future__ import annotations

import struct

import numpy as np


class FormatError(ValueError):
    pass


def _read_exact(f, n: int) -> bytes:
    b = f.read(n)
    if len(b) != n:
        raise FormatError("truncated file")
    return b


# ---------------------------------------------------------------------------
# float maps
# ---------------------------------------------------------------------------

def write_ssdm(path: str, data: np.ndarray):
    a = np.asarray(data, np.float32)
    if a.ndim != 2:
        raise FormatError(f"maps must be 2-D, got {a.shape}")
    h, w = a.shape
    with open(path, "wb") as f:
        f.write(b"SSDM")
        f.write(struct.pack("<IIB3x", w, h, 1))
        f.write(a.astype("<f4", copy=False).tobytes())


def read_ssdm(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        if _read_exact(f, 4) != b"SSDM":
            raise FormatError(f"{path}: bad magic")
        w, h, dtype = struct.unpack("<IIB3x", _read_exact(f, 12))
        if dtype != 1:
            raise FormatError(f"{path}: unknown dtype {dtype}")
        data = np.frombuffer(_read_exact(f, 4 * w * h), dtype="<f4")
    return data.reshape(h, w).astype(np.float32)


# ---------------------------------------------------------------------------
# bit masks
# ---------------------------------------------------------------------------

def write_ssbm(path: str, mask: np.ndarray):
    m = np.asarray(mask).astype(bool)
    if m.ndim != 2:
        raise FormatError(f"masks must be 2-D, got {m.shape}")
    h, w = m.shape
    with open(path, "wb") as f:
        f.write(b"SSBM")
        f.write(struct.pack("<II", w, h))
        f.write(np.packbits(m, axis=1).tobytes())


def read_ssbm(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        if _read_exact(f, 4) != b"SSBM":
            raise FormatError(f"{path}: bad magic")
        w, h = struct.unpack("<II", _read_exact(f, 8))
        stride = (w + 7) // 8
        rows = np.frombuffer(_read_exact(f, stride * h), np.uint8).reshape(h, stride)
    return np.unpackbits(rows, axis=1)[:, :w].astype(bool)


# ---------------------------------------------------------------------------
# voxel grids
# ---------------------------------------------------------------------------

def write_ssvx(path: str, occupancy: np.ndarray):
    occ = np.asarray(occupancy).astype(bool)
    if occ.ndim != 3 or len(set(occ.shape)) != 1:
        raise FormatError(f"voxel grid must be cubic, got {occ.shape}")
    r = occ.shape[0]
    # occupancy indexed [x, y, z]; file order wants x fastest
    flat = occ.transpose(2, 1, 0).ravel()
    with open(path, "wb") as f:
        f.write(b"SSVX")
        f.write(struct.pack("<I", r))
        f.write(np.packbits(flat).tobytes())


def read_ssvx(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        if _read_exact(f, 4) != b"SSVX":
            raise FormatError(f"{path}: bad magic")
        (r,) = struct.unpack("<I", _read_exact(f, 4))
        nbytes = (r * r * r + 7) // 8
        bits = np.unpackbits(np.frombuffer(_read_exact(f, nbytes), np.uint8))
    return bits[: r * r * r].reshape(r, r, r).transpose(2, 1, 0).astype(bool)


# ---------------------------------------------------------------------------
# images
# ---------------------------------------------------------------------------

def write_ppm(path: str, rgb01: np.ndarray):
    img = np.asarray(rgb01)
    if img.ndim != 3 or img.shape[2] != 3:
        raise FormatError(f"expected [H, W, 3] image, got {img.shape}")
    q = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    h, w = q.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(q.tobytes())


def read_ppm(path: str) -> np.ndarray:
    """Returns the image as float in [0, 1]."""
    with open(path, "rb") as f:
        blob = f.read()
    if not blob.startswith(b"P6"):
        raise FormatError(f"{path}: not a binary PPM")
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        fields.append(blob[start:pos])
    w, h, maxval = (int(x) for x in fields)
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval}")
    pos += 1  # single whitespace after maxval
    data = np.frombuffer(blob[pos : pos + w * h * 3], np.uint8)
    if data.size != w * h * 3:
        raise FormatError(f"{path}: truncated pixel data")
    return data.reshape(h, w, 3).astype(np.float64) / 255.0


# ---------------------------------------------------------------------------
# point clouds
# ---------------------------------------------------------------------------

def write_ply(path: str, points: np.ndarray):
    pts = np.asarray(points, np.float64).reshape(-1, 3)
    lines = [
        "ply\n",
        "format ascii 1.0\n",
        f"element vertex {len(pts)}\n",
        "property float x\n",
        "property float y\n",
        "property float z\n",
        "end_header\n",
    ]
    for x, y, z in pts:
        lines.append(f"{x:.9g} {y:.9g} {z:.9g}\n")
    with open(path, "w") as f:
        f.writelines(lines)


def read_ply(path: str) -> np.ndarray:
    with open(path) as f:
        if f.readline().strip() != "ply":
            raise FormatError(f"{path}: not a PLY file")
        n = None
        for line in f:
            line = line.strip()
            if line.startswith("element vertex"):
                n = int(line.split()[-1])
            elif line == "end_header":
                break
        else:
            raise FormatError(f"{path}: missing end_header")
        if n is None:
            raise FormatError(f"{path}: missing vertex element")
        pts = np.loadtxt(f, max_rows=n) if n else np.zeros((0, 3))
    return pts.reshape(n, 3)


# ---------------------------------------------------------------------------
# metadata
# ---------------------------------------------------------------------------

def write_meta(path: str, meta: dict):
    with open(path, "w") as f:
        for k, v in meta.items():
            f.write(f"{k}={v}\n")


def read_meta(path: str) -> dict:
    meta = {}
    with open(path) as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            k, _, v = line.partition("=")
            meta[k] = v
    return meta
