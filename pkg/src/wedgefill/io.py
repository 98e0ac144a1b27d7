"""Readers and writers for images, sinograms, masks and tensor fields.

Binary layout (little endian): ``b"TOMO"``, u32 rows, u32 cols, u32 dtype tag,
then ``rows * cols`` float32 values in row-major order.  Tensor fields are
written as their three planes stacked vertically (``rows = 3 * H``) with their
own tag.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .regularizers import TensorField

MAGIC = b"TOMO"
TAG_SCALAR = 1
TAG_TENSOR = 3
_HEADER = struct.Struct("<4sIII")


def write_binary(path, array, tag=TAG_SCALAR):
    a = np.asarray(array, dtype="<f4")
    if a.ndim != 2:
        raise ConfigurationError("only 2D arrays can be written")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, a.shape[0], a.shape[1], tag))
        fh.write(np.ascontiguousarray(a).tobytes())


def read_binary(path, with_tag=False):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ConfigurationError(f"{path}: truncated header")
    magic, rows, cols, tag = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ConfigurationError(f"{path}: bad magic {magic!r}")
    body = raw[_HEADER.size:]
    if len(body) != 4 * rows * cols:
        raise ConfigurationError(f"{path}: expected {rows}x{cols} floats")
    a = np.frombuffer(body, dtype="<f4").reshape(rows, cols).astype(float)
    return (a, tag) if with_tag else a


def write_tensor(path, A):
    write_binary(path, np.concatenate([A.m11, A.m12, A.m22], axis=0), TAG_TENSOR)


def read_tensor(path):
    a, tag = read_binary(path, with_tag=True)
    if tag != TAG_TENSOR or a.shape[0] % 3:
        raise ConfigurationError(f"{path}: not a tensor field")
    return TensorField(*np.split(a, 3, axis=0))


def write_csv(path, array, fmt="%.9g"):
    np.savetxt(path, np.asarray(array), delimiter=",", fmt=fmt)


def read_csv(path):
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float))


def write_mask(path, mask):
    np.savetxt(path, np.asarray(mask, dtype=int), delimiter=",", fmt="%d")


def read_mask(path):
    m = np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=int))
    if not np.isin(m, (0, 1)).all():
        raise ConfigurationError(f"{path}: mask entries must be 0 or 1")
    return m.astype(bool)


def write_pgm(path, image):
    """8-bit linear render; returns the ``(min, max)`` used for scaling."""
    a = np.asarray(image, dtype=float)
    lo, hi = float(a.min()), float(a.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    pix = np.clip(np.rint((a - lo) * scale), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n# min={lo!r} max={hi!r}\n{a.shape[1]} {a.shape[0]}\n255\n".encode())
        fh.write(pix.tobytes())
    return lo, hi


def read_pgm(path):
    """Inverse of :func:`write_pgm` up to 8-bit quantisation."""
    raw = Path(path).read_bytes()
    fields, pos, lo, hi = [], 0, 0.0, 255.0
    while len(fields) < 4:
        end = raw.index(b"\n", pos)
        line = raw[pos:end].decode()
        pos = end + 1
        if line.startswith("#"):
            for tok in line[1:].split():
                key, val = tok.split("=")
                if key == "min":
                    lo = float(val)
                elif key == "max":
                    hi = float(val)
            continue
        fields.extend(line.split())
    w, h = int(fields[1]), int(fields[2])
    pix = np.frombuffer(raw[pos:pos + w * h], dtype=np.uint8).reshape(h, w)
    return lo + pix.astype(float) * ((hi - lo) / 255.0)
