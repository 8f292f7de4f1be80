"""Single-file named-tensor format used for checkpoints and sample sets.

Layout: an 8-byte magic, an 8-byte little-endian header length, a JSON
header (version, and per tensor: name, dtype, shape, offset, nbytes), then the
raw little-endian C-order payloads. Writing the same tensors twice gives the
same bytes.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"TPCTNSR\n"
VERSION = 1
_DTYPES = {"f8": np.dtype("<f8"), "i8": np.dtype("<i8")}


class TensorFileError(ValueError):
    pass


def _canonical(a) -> tuple[str, np.ndarray]:
    a = np.asarray(a)
    if a.dtype.kind == "f":
        return "f8", np.ascontiguousarray(a, dtype=_DTYPES["f8"])
    if a.dtype.kind in "iub":
        return "i8", np.ascontiguousarray(a, dtype=_DTYPES["i8"])
    raise TensorFileError(f"unsupported dtype {a.dtype}")


def dump_tensors(tensors: dict) -> bytes:
    entries, blobs, offset = [], [], 0
    for name in sorted(tensors):
        code, arr = _canonical(tensors[name])
        raw = arr.tobytes()
        entries.append({"name": name, "dtype": code, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"version": VERSION, "tensors": entries}, sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + struct.pack("<Q", len(header)) + header + b"".join(blobs)


def parse_tensors(buf: bytes) -> dict[str, np.ndarray]:
    if buf[:8] != MAGIC:
        raise TensorFileError("not a topicast tensor file")
    try:
        (hlen,) = struct.unpack("<Q", buf[8:16])
        header = json.loads(buf[16:16 + hlen])
    except (struct.error, ValueError) as exc:
        raise TensorFileError(f"corrupt header: {exc}") from None
    if header.get("version") != VERSION:
        raise TensorFileError(f"unsupported tensor file version {header.get('version')}")
    base = 16 + hlen
    out = {}
    for e in header["tensors"]:
        start = base + e["offset"]
        if start + e["nbytes"] > len(buf):
            raise TensorFileError(f"tensor {e['name']!r} is truncated")
        arr = np.frombuffer(buf[start:start + e["nbytes"]], dtype=_DTYPES[e["dtype"]])
        out[e["name"]] = arr.reshape(e["shape"]).copy()
    return out


def save_tensors(path, tensors: dict) -> None:
    with open(path, "wb") as fh:
        fh.write(dump_tensors(tensors))


def load_tensors(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        return parse_tensors(fh.read())
