"""Versioned binary container shared by scenario files, memory snapshots and checkpoints.

Layout (little endian)::

    magic      4 bytes
    version    u32
    header_len u32
    header     UTF-8 JSON (scalars + array descriptors)
    payload    raw array bytes, concatenated in descriptor order

Floats stored as raw array bytes survive bit-exactly; JSON scalars rely on
``repr`` round-tripping, which is exact for Python floats.
"""
import json
import struct

import numpy as np

_PREFIX = struct.Struct("<4sII")


class ContainerError(ValueError):
    """Raised when bytes cannot be decoded; the message names the failing offset."""


def pack(magic: bytes, version: int, meta: dict, arrays: dict) -> bytes:
    descriptors = []
    blobs = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        descriptors.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape), "nbytes": arr.nbytes})
        blobs.append(arr.tobytes())
    header = json.dumps({"meta": meta, "arrays": descriptors}, sort_keys=True).encode("utf-8")
    return _PREFIX.pack(magic, version, len(header)) + header + b"".join(blobs)


def unpack(data: bytes, magic: bytes, version: int) -> tuple[dict, dict]:
    if len(data) < _PREFIX.size:
        raise ContainerError(f"truncated prefix at offset 0: need {_PREFIX.size} bytes, got {len(data)}")
    got_magic, got_version, header_len = _PREFIX.unpack_from(data, 0)
    if got_magic != magic:
        raise ContainerError(f"bad magic {got_magic!r} at offset 0, expected {magic!r}")
    if got_version != version:
        raise ContainerError(f"unsupported format version {got_version} at offset 4, expected {version}")
    offset = _PREFIX.size
    if offset + header_len > len(data):
        raise ContainerError(f"truncated header at offset {offset}: need {header_len} bytes")
    try:
        header = json.loads(data[offset:offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"corrupt header at offset {offset}: {exc}") from None
    offset += header_len
    arrays = {}
    for desc in header["arrays"]:
        nbytes = desc["nbytes"]
        if offset + nbytes > len(data):
            raise ContainerError(f"truncated array {desc['name']!r} at offset {offset}: need {nbytes} bytes")
        arr = np.frombuffer(data, dtype=np.dtype(desc["dtype"]), count=int(np.prod(desc["shape"], dtype=np.int64)),
                            offset=offset).reshape(desc["shape"]).copy()
        arrays[desc["name"]] = arr
        offset += nbytes
    if offset != len(data):
        raise ContainerError(f"{len(data) - offset} trailing bytes at offset {offset}")
    return header["meta"], arrays
