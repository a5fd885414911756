"""Binary weight checkpoints.

Byte layout (documented contract; all integers little-endian):

    bytes 0..3    magic b"TNNW"
    bytes 4..7    format version (uint32) == 1
    bytes 8..15   header length in bytes (uint64)
    header        UTF-8 JSON (see below)
    payload       raw parameter bytes, C-order (row-major), concatenated in
                  header order, followed by mask bytes (uint8) in header order

Header fields: format_version, dtype, input_shape, output_dim, seed,
layers (spec dicts), params (ordered: layer, name, shape, offset),
masks (ordered: layer, name, shape, offset), metadata (free-form dict,
e.g. training seed and epochs).

Round-trips are lossless: saved and reloaded parameter arrays compare
bit-identical.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import DataFormatError
from .network import NetworkGraph, build_from_descriptors

MAGIC = b"TNNW"
FORMAT_VERSION = 1


def save_checkpoint(net: NetworkGraph, path, metadata: dict | None = None) -> None:
    params = []
    payload = bytearray()
    for li, name, arr in net.parameter_items():
        params.append({"layer": li, "name": name, "shape": list(arr.shape),
                       "offset": len(payload)})
        payload += np.ascontiguousarray(arr).tobytes()
    masks = []
    for li, lay in enumerate(net.layers):
        for name in sorted(lay.masks):
            m = lay.masks[name].astype(np.uint8)
            masks.append({"layer": li, "name": name, "shape": list(m.shape),
                          "offset": len(payload)})
            payload += np.ascontiguousarray(m).tobytes()
    header = {
        "format_version": FORMAT_VERSION,
        "dtype": net.dtype,
        "input_shape": list(net.input_shape),
        "output_dim": net.output_dim,
        "seed": net.seed,
        "layers": net.descriptors(),
        "params": params,
        "masks": masks,
        "metadata": metadata or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(bytes(payload))


def load_checkpoint(path) -> tuple[NetworkGraph, dict]:
    """Rebuilds the network and returns (net, metadata)."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 16:
        raise DataFormatError("checkpoint truncated before header frame",
                              path=path, offset=len(raw))
    if raw[:4] != MAGIC:
        raise DataFormatError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}",
                              path=path, offset=0)
    (version,) = struct.unpack("<I", raw[4:8])
    if version != FORMAT_VERSION:
        raise DataFormatError(f"unsupported checkpoint version {version}",
                              path=path, offset=4)
    (hlen,) = struct.unpack("<Q", raw[8:16])
    if len(raw) < 16 + hlen:
        raise DataFormatError("checkpoint truncated inside header",
                              path=path, offset=len(raw))
    try:
        header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataFormatError(f"corrupt header: {e}", path=path, offset=16) from e
    payload = raw[16 + hlen:]
    net = build_from_descriptors(header["layers"], header["input_shape"],
                                 dtype=header["dtype"], seed=header["seed"])
    itemsize = np.dtype(header["dtype"]).itemsize
    for entry, (li, name, arr) in zip(header["params"], net.parameter_items()):
        if entry["layer"] != li or entry["name"] != name or list(arr.shape) != entry["shape"]:
            raise DataFormatError(
                f"param table mismatch: stored {entry}, rebuilt layer {li} {name} "
                f"{arr.shape}", path=path)
        nbytes = int(np.prod(entry["shape"])) * itemsize
        start = entry["offset"]
        if start + nbytes > len(payload):
            raise DataFormatError("checkpoint truncated inside parameter payload",
                                  path=path, offset=16 + hlen + start)
        arr[...] = np.frombuffer(payload[start:start + nbytes],
                                 dtype=header["dtype"]).reshape(entry["shape"])
    for entry in header["masks"]:
        lay = net.layers[entry["layer"]]
        nbytes = int(np.prod(entry["shape"]))
        start = entry["offset"]
        if start + nbytes > len(payload):
            raise DataFormatError("checkpoint truncated inside mask payload",
                                  path=path, offset=16 + hlen + start)
        mask = np.frombuffer(payload[start:start + nbytes],
                             dtype=np.uint8).reshape(entry["shape"])
        lay.masks[entry["name"]] = mask.astype(header["dtype"])
        lay.apply_masks()
    return net, header["metadata"]
