"""Versioned binary framing shared by the lattice, rule and coefficient caches.

Layout::

    8 bytes   magic b"BERGLAB\\n"
    uint32    format version (little-endian)
    uint32    header length H in bytes
    H bytes   UTF-8 header, one ``key=value`` per line (includes ``count`` and ``cols``)
    payload   count * cols little-endian float64, row-major
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .errors import FramingError

MAGIC = b"BERGLAB\n"
FORMAT_VERSION = 1


def encode_frame(header, rows):
    rows = np.ascontiguousarray(np.atleast_2d(np.asarray(rows, dtype="<f8")))
    if rows.size == 0:
        rows = rows.reshape(0, int(header.get("cols", 1)))
    full = dict(header)
    full["count"] = rows.shape[0]
    full["cols"] = rows.shape[1]
    text = "".join(f"{k}={_fmt(v)}\n" for k, v in full.items()).encode("utf-8")
    return MAGIC + struct.pack("<II", FORMAT_VERSION, len(text)) + text + rows.tobytes()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def decode_frame(data):
    if len(data) < len(MAGIC) + 8 or not data.startswith(MAGIC):
        raise FramingError("not a bergman-lab cache file (bad magic)")
    version, hlen = struct.unpack_from("<II", data, len(MAGIC))
    if version != FORMAT_VERSION:
        raise FramingError(f"unsupported cache format version {version}")
    start = len(MAGIC) + 8
    if len(data) < start + hlen:
        raise FramingError("truncated cache header")
    header = {}
    for line in data[start : start + hlen].decode("utf-8").splitlines():
        if "=" not in line:
            raise FramingError(f"malformed header line {line!r}")
        key, value = line.split("=", 1)
        header[key] = value
    try:
        count, cols = int(header["count"]), int(header["cols"])
    except (KeyError, ValueError) as exc:
        raise FramingError("header lacks a valid count/cols") from exc
    payload = data[start + hlen :]
    if len(payload) != count * cols * 8:
        raise FramingError(f"payload has {len(payload)} bytes, header promises {count * cols * 8}")
    rows = np.frombuffer(payload, dtype="<f8").reshape(count, cols).astype(float)
    return header, rows


def atomic_write(path, data):
    """Write bytes or text via a temporary file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode("utf-8") if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_frame(path, header, rows):
    atomic_write(path, encode_frame(header, rows))


def read_frame(path):
    with open(path, "rb") as fh:
        return decode_frame(fh.read())
