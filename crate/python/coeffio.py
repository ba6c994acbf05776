"""Pure-Python reader and writer for HGMC coefficient containers.

This is the format used to exchange coefficient matrices with external
trainers. It depends only on the standard library.
"""

import struct

MAGIC = b"HGMC"
VERSION = 1
KINDS = {1: "coefficient_matrix", 2: "matrix", 3: "vector"}
_HEADER = struct.Struct("<4sHBQQ")


def encode(kind, rows, cols, values, metadata):
    if len(values) != rows * cols:
        raise ValueError(f"{len(values)} values for a {rows}x{cols} payload")
    out = bytearray(_HEADER.pack(MAGIC, VERSION, kind, rows, cols))
    out += struct.pack(f"<{len(values)}d", *values)
    for key in sorted(metadata):
        value = str(metadata[key])
        if not key or "=" in key or "\n" in key or "\n" in value:
            raise ValueError(f"metadata entry {key!r} cannot be encoded")
        out += f"{key}={value}\n".encode("utf-8")
    return bytes(out)


def decode(data):
    if data[:4] != MAGIC:
        raise ValueError('bad magic, expected "HGMC"')
    if len(data) < _HEADER.size:
        raise ValueError("truncated header")
    _, version, kind, rows, cols = _HEADER.unpack_from(data)
    if version != VERSION:
        raise ValueError(f"unsupported version {version}")
    if kind not in KINDS:
        raise ValueError(f"unknown container kind {kind}")
    end = _HEADER.size + 8 * rows * cols
    if end > len(data):
        raise ValueError("payload truncated")
    values = list(struct.unpack_from(f"<{rows * cols}d", data, _HEADER.size))
    metadata = {}
    for line in data[end:].decode("utf-8").split("\n"):
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"metadata line {line!r} lacks '='")
        if key in metadata:
            raise ValueError(f"duplicate metadata key {key!r}")
        metadata[key] = value
    return kind, rows, cols, values, metadata


def write(path, kind, rows, cols, values, metadata):
    with open(path, "wb") as f:
        f.write(encode(kind, rows, cols, values, metadata))


def read(path):
    with open(path, "rb") as f:
        return decode(f.read())
