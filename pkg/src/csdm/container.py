"""Checksummed binary container shared by datasets, sample sets and
checkpoints.

Layout: 4-byte magic, u32 LE format version, u64 LE header length, a
canonical-JSON header (sorted keys, no whitespace), the raw payload bytes,
and a trailing u64 LE checksum (blake2b, 8-byte digest) over header-length
+ header + payload. Readers verify length and checksum; headers can be
read without touching the payload.
"""

from __future__ import annotations

import hashlib
import json
import struct

from .errors import CorruptPayloadError, VersionMismatchError

FORMAT_VERSION = 1


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _digest(data: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def write_container(path, magic: bytes, header: dict, payload: bytes,
                    version: int = FORMAT_VERSION):
    if len(magic) != 4:
        raise ValueError("magic must be exactly 4 bytes")
    hdr = canonical_json(header)
    body = struct.pack("<Q", len(hdr)) + hdr + payload
    with open(path, "wb") as f:
        f.write(magic)
        f.write(struct.pack("<I", version))
        f.write(body)
        f.write(struct.pack("<Q", _digest(body)))


def read_header(path, magic: bytes) -> tuple[int, dict, int]:
    """Magic/version/header without reading the payload.

    Returns (version, header, payload_length).
    """
    import os
    size = os.path.getsize(path)
    with open(path, "rb") as f:
        got = f.read(4)
        if got != magic:
            raise CorruptPayloadError(f"bad magic {got!r}, expected {magic!r}")
        version = struct.unpack("<I", _need(f.read(4), 4))[0]
        if version != FORMAT_VERSION:
            raise VersionMismatchError(
                f"container version {version} not supported (reader is {FORMAT_VERSION})")
        hlen = struct.unpack("<Q", _need(f.read(8), 8))[0]
        hdr_bytes = _need(f.read(hlen), hlen)
        header = json.loads(hdr_bytes.decode("utf-8"))
    payload_len = size - (4 + 4 + 8 + hlen + 8)
    if payload_len < 0:
        raise CorruptPayloadError("container truncated before payload")
    return version, header, payload_len


def read_container(path, magic: bytes) -> tuple[dict, bytes]:
    """Fully verified read: returns (header, payload)."""
    with open(path, "rb") as f:
        got = f.read(4)
        if got != magic:
            raise CorruptPayloadError(f"bad magic {got!r}, expected {magic!r}")
        version = struct.unpack("<I", _need(f.read(4), 4))[0]
        if version != FORMAT_VERSION:
            raise VersionMismatchError(
                f"container version {version} not supported (reader is {FORMAT_VERSION})")
        rest = f.read()
    if len(rest) < 16:
        raise CorruptPayloadError("container truncated")
    body, tail = rest[:-8], rest[-8:]
    if _digest(body) != struct.unpack("<Q", tail)[0]:
        raise CorruptPayloadError("checksum mismatch: payload corrupt or truncated")
    hlen = struct.unpack("<Q", body[:8])[0]
    if len(body) < 8 + hlen:
        raise CorruptPayloadError("container truncated inside header")
    header = json.loads(body[8:8 + hlen].decode("utf-8"))
    return header, body[8 + hlen:]


def _need(b: bytes, n: int) -> bytes:
    if len(b) != n:
        raise CorruptPayloadError("container truncated")
    return b
