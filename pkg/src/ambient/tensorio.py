"""AMBT v1 tensor files and ``key = value`` sidecars.

Layout (little-endian only)::

    b"AMBT" | u8 version=1 | u8 dtype code | u8 ndim | u8 pad | ndim x u32 dims | payload

dtype codes: 0=f32, 1=f64, 2=c64, 3=c128. Payload is row-major.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

MAGIC = b"AMBT"
VERSION = 1

_CODES = {
    np.dtype("<f4"): 0,
    np.dtype("<f8"): 1,
    np.dtype("<c8"): 2,
    np.dtype("<c16"): 3,
}
_DTYPES = {v: k for k, v in _CODES.items()}


class TensorFormatError(ValueError):
    pass


def encode_tensor(x) -> bytes:
    x = np.asarray(x)
    dt = x.dtype.newbyteorder("<")
    if dt not in _CODES:
        raise TensorFormatError(f"unsupported dtype {x.dtype}")
    if x.ndim == 0 or x.ndim > 255:
        raise TensorFormatError("tensor must have between 1 and 255 dims")
    header = MAGIC + struct.pack("<BBBB", VERSION, _CODES[dt], x.ndim, 0)
    header += struct.pack(f"<{x.ndim}I", *x.shape)
    return header + np.ascontiguousarray(x, dtype=dt).tobytes()


def decode_tensor(buf: bytes, expect_dtype=None) -> np.ndarray:
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise TensorFormatError("bad magic, not an AMBT file")
    version, code, ndim, _ = struct.unpack("<BBBB", buf[4:8])
    if version != VERSION:
        raise TensorFormatError(f"unsupported AMBT version {version}")
    if code not in _DTYPES:
        raise TensorFormatError(f"unknown dtype code {code}")
    if ndim == 0:
        raise TensorFormatError("ndim must be positive")
    end = 8 + 4 * ndim
    if len(buf) < end:
        raise TensorFormatError("truncated header")
    shape = struct.unpack(f"<{ndim}I", buf[8:end])
    dt = _DTYPES[code]
    nbytes = int(np.prod(shape)) * dt.itemsize
    if len(buf) - end != nbytes:
        raise TensorFormatError(
            f"payload has {len(buf) - end} bytes, expected {nbytes} (truncated or trailing data)"
        )
    if expect_dtype is not None and np.dtype(expect_dtype).newbyteorder("<") != dt:
        raise TensorFormatError(f"dtype mismatch: file holds {dt}, expected {np.dtype(expect_dtype)}")
    return np.frombuffer(buf, dtype=dt, offset=end).reshape(shape).astype(dt.newbyteorder("="))


def save_tensor(path, x) -> None:
    Path(path).write_bytes(encode_tensor(x))


def load_tensor(path, expect_dtype=None) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes(), expect_dtype=expect_dtype)


# -- key/value sidecars ------------------------------------------------------

def format_kv(items: dict) -> str:
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in items.items())


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(e) for e in v)
    return str(v)


def parse_kv(text: str) -> dict:
    """Parse flat ``key = value`` text; ``#`` starts a comment line."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def write_kv(path, items: dict) -> None:
    Path(path).write_text(format_kv(items), encoding="utf-8")


def read_kv(path) -> dict:
    return parse_kv(Path(path).read_text(encoding="utf-8"))


def text_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
