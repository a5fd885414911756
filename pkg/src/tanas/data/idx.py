"""IDX file reading and writing.

Layout: big-endian magic (0x00000803 for 3-D uint8 image tensors,
0x00000801 for 1-D uint8 label vectors), one big-endian uint32 per
dimension, then the raw uint8 payload in row-major order.  Parsing is
fail-closed: a short or malformed file raises with the byte offset.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import DataFormatError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


def _read_exact(fh, n, path, what):
    pos = fh.tell()
    buf = fh.read(n)
    if len(buf) != n:
        raise DataFormatError(f"truncated while reading {what}", path=path,
                              offset=pos + len(buf))
    return buf


def read_idx_images(path) -> np.ndarray:
    """Reads an image IDX file into a uint8 array of shape (count, rows, cols)."""
    path = Path(path)
    if not path.exists():
        raise DataFormatError("file not found", path=path)
    with open(path, "rb") as fh:
        head = fh.read(4)
        if len(head) < 4:
            raise DataFormatError("truncated magic", path=path, offset=len(head))
        (magic,) = struct.unpack(">I", head)
        if magic != IMAGE_MAGIC:
            raise DataFormatError(
                f"bad image magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}",
                path=path, offset=0)
        dims = struct.unpack(">III", _read_exact(fh, 12, path, "image dimensions"))
        count, rows, cols = dims
        expected = count * rows * cols
        payload = fh.read(expected)
        if len(payload) != expected:
            raise DataFormatError(
                f"truncated image payload: expected {expected} bytes, got {len(payload)}",
                path=path, offset=16 + len(payload))
        if fh.read(1):
            raise DataFormatError("trailing bytes after image payload",
                                  path=path, offset=16 + expected)
    return np.frombuffer(payload, dtype=np.uint8).reshape(count, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    """Reads a label IDX file into a uint8 vector."""
    path = Path(path)
    if not path.exists():
        raise DataFormatError("file not found", path=path)
    with open(path, "rb") as fh:
        head = fh.read(4)
        if len(head) < 4:
            raise DataFormatError("truncated magic", path=path, offset=len(head))
        (magic,) = struct.unpack(">I", head)
        if magic != LABEL_MAGIC:
            raise DataFormatError(
                f"bad label magic 0x{magic:08x}, expected 0x{LABEL_MAGIC:08x}",
                path=path, offset=0)
        (count,) = struct.unpack(">I", _read_exact(fh, 4, path, "label count"))
        payload = fh.read(count)
        if len(payload) != count:
            raise DataFormatError(
                f"truncated label payload: expected {count} bytes, got {len(payload)}",
                path=path, offset=8 + len(payload))
        if fh.read(1):
            raise DataFormatError("trailing bytes after label payload",
                                  path=path, offset=8 + count)
    return np.frombuffer(payload, dtype=np.uint8)


def write_idx_images(path, images: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise DataFormatError(f"image tensor must be 3-D, got shape {images.shape}",
                              path=path)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGE_MAGIC, *images.shape))
        fh.write(np.ascontiguousarray(images).tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    if labels.ndim != 1:
        raise DataFormatError(f"label vector must be 1-D, got shape {labels.shape}",
                              path=path)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", LABEL_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())
