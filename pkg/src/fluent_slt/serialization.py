"""Binary container for named float32 tensors with a text header.

Layout (all little-endian):
  magic "FSLT", uint32 version
  uint32 header length, UTF-8 "key=value" lines
  uint32 tensor count, then per tensor:
    uint16 name length, name UTF-8, uint8 ndim, uint32 dims, float32 data

Writers emit keys and tensor names in sorted order so identical contents
produce identical bytes.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"FSLT"
VERSION = 1


def write_container(path, header: dict, arrays: dict) -> None:
    header_text = "".join(f"{k}={header[k]}\n" for k in sorted(header))
    for k, v in header.items():
        if "\n" in k or "=" in k or "\n" in str(v):
            raise ValueError(f"header entry {k!r} contains a newline or '='")
    blob = header_text.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(arrays)))
        for name in sorted(arrays):
            arr = np.ascontiguousarray(arrays[name], dtype="<f4")
            nb = name.encode("utf-8")
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def read_container(path):
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise DataError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != VERSION:
        raise DataError(f"{path}: unsupported container version {version}")
    (hlen,) = struct.unpack("<I", raw[8:12])
    pos = 12
    header = {}
    for line in raw[pos : pos + hlen].decode("utf-8").splitlines():
        key, _, value = line.partition("=")
        header[key] = value
    pos += hlen
    (count,) = struct.unpack("<I", raw[pos : pos + 4])
    pos += 4
    arrays = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", raw[pos : pos + 2])
        pos += 2
        name = raw[pos : pos + nlen].decode("utf-8")
        pos += nlen
        ndim = raw[pos]
        pos += 1
        dims = struct.unpack(f"<{ndim}I", raw[pos : pos + 4 * ndim])
        pos += 4 * ndim
        n = int(np.prod(dims)) if ndim else 1
        arrays[name] = np.frombuffer(raw[pos : pos + 4 * n], dtype="<f4").reshape(dims).copy()
        pos += 4 * n
    return header, arrays
