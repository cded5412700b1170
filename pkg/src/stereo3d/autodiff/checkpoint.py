"""Binary checkpoint container.

Layout (all integers little-endian):

    magic   4 bytes  b"SSCK"
    version u32      currently 1
    hlen    u32      byte length of the header text
    header  hlen bytes of UTF-8 "key=value" lines (may be empty)
    records until EOF:
        nlen    u16
        name    nlen bytes UTF-8
        rank    u8
        extents rank x u32
        data    prod(extents) x f32

Values are stored f32 regardless of in-memory dtype, which matches the
training precision; round-trip of f32 state is bit-exact.
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"SSCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _encode_header(header: dict[str, str]) -> bytes:
    lines = []
    for k, v in header.items():
        k, v = str(k), str(v)
        if "=" in k or "\n" in k or "\n" in v:
            raise CheckpointError(f"illegal header entry: {k!r}={v!r}")
        lines.append(f"{k}={v}\n")
    return "".join(lines).encode("utf-8")


def _decode_header(blob: bytes) -> dict[str, str]:
    header: dict[str, str] = {}
    for line in blob.decode("utf-8").splitlines():
        if not line:
            continue
        if "=" not in line:
            raise CheckpointError(f"malformed header line: {line!r}")
        k, v = line.split("=", 1)
        header[k] = v
    return header


def save_checkpoint(path: str, arrays: dict[str, np.ndarray], header: dict[str, str] | None = None):
    """Write atomically (temp file + rename) so readers never see a torn file."""
    hblob = _encode_header(header or {})
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", len(hblob)))
        f.write(hblob)
        for name, arr in arrays.items():
            nb = name.encode("utf-8")
            if len(nb) > 0xFFFF:
                raise CheckpointError(f"name too long: {name!r}")
            # asarray, not ascontiguousarray: the latter promotes 0-d to 1-d
            a = np.asarray(arr, dtype=np.float32)
            if a.ndim > 0xFF:
                raise CheckpointError(f"rank too large for {name!r}")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", a.ndim))
            for e in a.shape:
                f.write(struct.pack("<I", e))
            f.write(a.astype("<f4", copy=False).tobytes())
    os.replace(tmp, path)


def _read_exact(f, n: int) -> bytes:
    b = f.read(n)
    if len(b) != n:
        raise CheckpointError("truncated checkpoint file")
    return b


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    arrays: dict[str, np.ndarray] = {}
    with open(path, "rb") as f:
        if _read_exact(f, 4) != MAGIC:
            raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
        (version,) = struct.unpack("<I", _read_exact(f, 4))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        (hlen,) = struct.unpack("<I", _read_exact(f, 4))
        header = _decode_header(_read_exact(f, hlen))
        while True:
            lead = f.read(2)
            if not lead:
                break
            if len(lead) != 2:
                raise CheckpointError("truncated checkpoint file")
            (nlen,) = struct.unpack("<H", lead)
            name = _read_exact(f, nlen).decode("utf-8")
            (rank,) = struct.unpack("<B", _read_exact(f, 1))
            shape = tuple(
                struct.unpack("<I", _read_exact(f, 4))[0] for _ in range(rank)
            )
            count = int(np.prod(shape, dtype=np.int64)) if rank else 1
            data = np.frombuffer(_read_exact(f, 4 * count), dtype="<f4")
            if name in arrays:
                raise CheckpointError(f"duplicate record {name!r}")
            arrays[name] = data.reshape(shape).astype(np.float32)
    return arrays, header
