"""Versioned flat-binary model files.

Layout: magic, format version, metadata JSON (length-prefixed), shape
table (name, dims per parameter), float64 parameter blob, crc32 of the
blob.  The loader refuses files whose checksum does not match.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"RLSQ"
VERSION = 1


class ModelFileError(ValueError):
    pass


def save_params(path, named_params: list[tuple[str, "np.ndarray"]], meta: dict | None = None):
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode()
    blob = b"".join(np.ascontiguousarray(p, dtype=np.float64).tobytes()
                    for _, p in named_params)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(named_params)))
        for name, p in named_params:
            nb = name.encode()
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<B", p.ndim))
            fh.write(struct.pack(f"<{p.ndim}I", *p.shape))
        fh.write(struct.pack("<I", zlib.crc32(blob)))
        fh.write(blob)


def load_params(path) -> tuple[dict, list[tuple[str, "np.ndarray"]]]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ModelFileError(f"{path}: bad magic")
    off = 4
    (version,) = struct.unpack_from("<I", raw, off); off += 4
    if version != VERSION:
        raise ModelFileError(f"{path}: unsupported version {version}")
    (mlen,) = struct.unpack_from("<I", raw, off); off += 4
    meta = json.loads(raw[off:off + mlen]); off += mlen
    (count,) = struct.unpack_from("<I", raw, off); off += 4
    entries = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", raw, off); off += 2
        name = raw[off:off + nlen].decode(); off += nlen
        (ndim,) = struct.unpack_from("<B", raw, off); off += 1
        shape = struct.unpack_from(f"<{ndim}I", raw, off); off += 4 * ndim
        entries.append((name, shape))
    (crc,) = struct.unpack_from("<I", raw, off); off += 4
    blob = raw[off:]
    if zlib.crc32(blob) != crc:
        raise ModelFileError(f"{path}: checksum mismatch")
    out = []
    pos = 0
    for name, shape in entries:
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype=np.float64, count=n, offset=pos).reshape(shape)
        out.append((name, arr.copy()))
        pos += n * 8
    return meta, out


def save_module(path, module, meta: dict | None = None):
    save_params(path, [(n, p.data) for n, p in module.named_parameters()], meta)


def load_into_module(path, module) -> dict:
    meta, params = load_params(path)
    current = dict(module.named_parameters())
    if set(current) != {n for n, _ in params}:
        raise ModelFileError("parameter name set mismatch")
    for name, arr in params:
        if current[name].data.shape != arr.shape:
            raise ModelFileError(f"shape mismatch for {name}")
        current[name].data[...] = arr
    return meta
