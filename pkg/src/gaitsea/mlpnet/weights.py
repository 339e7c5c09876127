"""Binary weights file.

Layout (little-endian)::

    b"GMLP" | u32 version=1 | u32 layer_count
    layer_count x (u32 rows, u32 cols)
    all weight matrices, row-major f64
    all bias vectors, f64
    u64 FNV-1a hash of every preceding byte

The file holds no topology flags; the stage boundary is recovered from the
shapes (see :func:`infer_stage_split`).
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import FormatError
from .network import BranchedNetwork

MAGIC = b"GMLP"
VERSION = 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK
    return h


def header_size(n_layers: int) -> int:
    return 12 + 8 * n_layers


def serialize_network(net: BranchedNetwork) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, net.n_layers)]
    parts += [struct.pack("<II", *w.shape) for w in net.weights]
    parts += [np.ascontiguousarray(w, dtype="<f8").tobytes() for w in net.weights]
    parts += [np.ascontiguousarray(b, dtype="<f8").tobytes() for b in net.biases]
    payload = b"".join(parts)
    return payload + struct.pack("<Q", fnv1a64(payload))


def infer_stage_split(shapes: list[tuple[int, int]]) -> tuple[int, bool]:
    """Return (layers in stage 1, whether stage 2 also takes hidden features).

    A chain break where layer k+1 takes rows[k] + rows[k-1] inputs marks the
    skip variant. Otherwise the middle output layer is taken to be the first
    interior layer with the narrowest output.
    """
    rows = [r for r, _ in shapes]
    cols = [c for _, c in shapes]
    for k in range(1, len(shapes) - 1):
        if cols[k + 1] != rows[k] and cols[k + 1] == rows[k] + rows[k - 1]:
            return k + 1, True
    interior = rows[:-1]
    return interior.index(min(interior)) + 1, False


def deserialize_network(
    data: bytes,
    n_stage1: int | None = None,
    phase_encoding: str | None = None,
) -> BranchedNetwork:
    """Rebuild a network, checking magic, version, length, checksum and shapes in that order."""
    data = bytes(data)
    if len(data) < 12:
        raise FormatError("truncation", f"{len(data)} bytes is shorter than the fixed header")
    if data[:4] != MAGIC:
        raise FormatError("magic", f"expected {MAGIC!r}, found {data[:4]!r}")
    version, n_layers = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise FormatError("version", f"unsupported version {version}")
    if n_layers < 2:
        raise FormatError("shape", f"layer count {n_layers} < 2")
    hsize = header_size(n_layers)
    if len(data) < hsize + 8:
        raise FormatError("truncation", "file ends inside the layer table")
    shapes = [struct.unpack_from("<II", data, 12 + 8 * k) for k in range(n_layers)]
    n_params = sum(r * c + r for r, c in shapes)
    expected = hsize + 8 * n_params + 8
    if len(data) < expected:
        raise FormatError("truncation", f"expected {expected} bytes, found {len(data)}")
    if len(data) > expected:
        raise FormatError("size", f"{len(data) - expected} trailing bytes")
    (stored,) = struct.unpack_from("<Q", data, expected - 8)
    if fnv1a64(data[: expected - 8]) != stored:
        raise FormatError("checksum", "FNV-1a checksum mismatch")

    values = np.frombuffer(data, dtype="<f8", count=n_params, offset=hsize).astype(float)
    weights, biases, pos = [], [], 0
    for r, c in shapes:
        weights.append(values[pos:pos + r * c].reshape(r, c).copy())
        pos += r * c
    for r, _ in shapes:
        biases.append(values[pos:pos + r].copy())
        pos += r

    split, skip = infer_stage_split(shapes)
    if n_stage1 is not None:
        split = n_stage1
    if phase_encoding is None:
        phase_encoding = "sincos" if shapes[split - 1][0] == 3 else "raw"
    try:
        return BranchedNetwork(weights, biases, split, skip, phase_encoding)
    except ValueError as exc:
        raise FormatError("shape", str(exc)) from None


def save_network(net: BranchedNetwork, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_network(net))


def load_network(path, **kwargs) -> BranchedNetwork:
    with open(path, "rb") as fh:
        return deserialize_network(fh.read(), **kwargs)
