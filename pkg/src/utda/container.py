"""Little-endian binary container used by the model (UTDA) and dataset (UTDS) files.

Layout::

    magic        4 bytes
    version      u16
    header_len   u32, then header_len bytes of format-specific fixed header
    meta_len     u32, then UTF-8 JSON (sorted keys)
    n_blocks     u32
    per block:   name_len u16, name, dtype u8, ndim u8, shape u64 x ndim, payload
    crc32        u32 over every preceding byte
"""

import io
import json
import struct
import zlib

import numpy as np

from .errors import FormatError

_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<i8"), 2: np.dtype("u1")}
_CODES = {np.dtype("float64"): 0, np.dtype("int64"): 1, np.dtype("uint8"): 2}


def encode(magic, version, header, meta, blocks):
    buf = io.BytesIO()
    buf.write(magic)
    buf.write(struct.pack("<H", version))
    buf.write(struct.pack("<I", len(header)))
    buf.write(header)
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf.write(struct.pack("<I", len(meta_bytes)))
    buf.write(meta_bytes)
    buf.write(struct.pack("<I", len(blocks)))
    for name, arr in blocks.items():
        arr = np.asarray(arr)
        code = _CODES.get(arr.dtype)
        if code is None:
            raise TypeError(f"block {name!r}: unsupported dtype {arr.dtype}")
        name_b = name.encode("utf-8")
        buf.write(struct.pack("<H", len(name_b)))
        buf.write(name_b)
        buf.write(struct.pack("<BB", code, arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated file while reading {what}", offset=self.pos)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode(data, magic, max_version):
    """Parse a container; returns ``(version, header_bytes, meta, blocks)``."""
    r = _Reader(data)
    got = r.take(4, "magic")
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}", offset=0)
    (version,) = r.unpack("<H", "version")
    if version < 1 or version > max_version:
        raise FormatError(f"unsupported format version {version}", offset=4)
    (hlen,) = r.unpack("<I", "header length")
    header = r.take(hlen, "header")
    (mlen,) = r.unpack("<I", "metadata length")
    meta_off = r.pos
    try:
        meta = json.loads(r.take(mlen, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt metadata: {exc}", offset=meta_off) from None
    (nblocks,) = r.unpack("<I", "block count")
    blocks = {}
    for _ in range(nblocks):
        (nlen,) = r.unpack("<H", "block name length")
        name = r.take(nlen, "block name").decode("utf-8", errors="replace")
        code, ndim = r.unpack("<BB", f"block {name!r} descriptor")
        if code not in _DTYPES:
            raise FormatError(f"block {name!r}: unknown dtype code {code}", offset=r.pos - 2)
        shape = r.unpack(f"<{ndim}Q", f"block {name!r} shape")
        dt = _DTYPES[code]
        n = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        payload = r.take(n, f"block {name!r} payload")
        blocks[name] = np.frombuffer(payload, dtype=dt).reshape(shape).astype(dt.newbyteorder("="))
    body_end = r.pos
    (crc,) = r.unpack("<I", "checksum")
    if crc != zlib.crc32(data[:body_end]):
        raise FormatError("checksum mismatch", offset=body_end)
    if r.pos != len(data):
        raise FormatError("trailing bytes after checksum", offset=r.pos)
    return version, header, meta, blocks


def write_file(path, payload):
    with open(path, "wb") as fh:
        fh.write(payload)


def read_file(path):
    with open(path, "rb") as fh:
        return fh.read()
