"""Binary checkpoint container.

Layout: magic ``QIH1``; u32 length + UTF-8 JSON config block (sorted keys);
u32 tensor count; per-tensor records sorted by name: u16 name length, name,
u8 trainable flag, u8 rank, u32 dims, then the row-major little-endian
float32 payload. Round-trips are bit-exact, and byte output is a pure
function of (config, tensors), which is what makes training reproducibility
checkable by comparing checkpoint bytes.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct

import numpy as np

from .errors import ConfigError

MAGIC = b"QIH1"


def _tensor_items(tensors):
    for name in sorted(tensors):
        t = tensors[name]
        data = t.data if hasattr(t, "data") else np.asarray(t)
        trainable = bool(getattr(t, "trainable", False))
        yield name, np.ascontiguousarray(data, dtype="<f4"), trainable


def dump_bytes(config, tensors):
    buf = io.BytesIO()
    buf.write(MAGIC)
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    items = list(_tensor_items(tensors))
    buf.write(struct.pack("<I", len(items)))
    for name, data, trainable in items:
        nb = name.encode("utf-8")
        buf.write(struct.pack("<H", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<BB", int(trainable), data.ndim))
        for d in data.shape:
            buf.write(struct.pack("<I", d))
        buf.write(data.tobytes())
    return buf.getvalue()


def load_bytes(raw):
    """Returns (config, {name: float32 array}, {name: trainable flag})."""
    view = memoryview(raw)
    if bytes(view[:4]) != MAGIC:
        raise ConfigError("not a QIH1 checkpoint (bad magic)")
    off = 4
    (clen,) = struct.unpack_from("<I", view, off)
    off += 4
    config = json.loads(bytes(view[off:off + clen]).decode("utf-8"))
    off += clen
    (count,) = struct.unpack_from("<I", view, off)
    off += 4
    tensors, flags = {}, {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", view, off)
        off += 2
        name = bytes(view[off:off + nlen]).decode("utf-8")
        off += nlen
        trainable, rank = struct.unpack_from("<BB", view, off)
        off += 2
        dims = struct.unpack_from(f"<{rank}I", view, off) if rank else ()
        off += 4 * rank
        size = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(view, dtype="<f4", count=size, offset=off).reshape(dims).copy()
        off += 4 * size
        tensors[name] = arr
        flags[name] = bool(trainable)
    return config, tensors, flags


def save(path, config, tensors):
    with open(path, "wb") as fh:
        fh.write(dump_bytes(config, tensors))


def load(path):
    with open(path, "rb") as fh:
        return load_bytes(fh.read())


def checksum(tensors, names=None):
    """SHA-256 over (name, payload) pairs in sorted name order."""
    h = hashlib.sha256()
    selected = sorted(names) if names is not None else sorted(tensors)
    for name in selected:
        t = tensors[name]
        data = t.data if hasattr(t, "data") else np.asarray(t)
        h.update(name.encode("utf-8"))
        h.update(np.ascontiguousarray(data, dtype="<f4").tobytes())
    return h.hexdigest()
