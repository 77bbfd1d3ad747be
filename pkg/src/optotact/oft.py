"""Binary force-log format ".oft".

Layout: 4-byte magic "OFT1", then fixed 42-byte records, little endian:
u64 timestamp_ns, 3x u16 counts, 3x f64 wrench, u32 CRC-32 of the preceding
38 record bytes. Floats round-trip bit exactly.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = [
    "MAGIC",
    "RECORD_DTYPE",
    "OftFormatError",
    "OftCrcError",
    "write_oft",
    "read_oft",
]

MAGIC = b"OFT1"
RECORD_DTYPE = np.dtype([("t", "<u8"), ("v", "<u2", (3,)), ("w", "<f8", (3,))])
_PAYLOAD = RECORD_DTYPE.itemsize  # 38
_RECORD = _PAYLOAD + 4


class OftFormatError(ValueError):
    """The byte stream is not a valid .oft file."""


class OftCrcError(OftFormatError):
    """A record failed its CRC check."""

    def __init__(self, index: int):
        super().__init__(f"CRC mismatch in record {index}")
        self.index = index


def write_oft(path, timestamps, counts, wrenches) -> int:
    """Serialize frames; returns the number of records written."""
    timestamps = np.asarray(timestamps)
    counts = np.asarray(counts)
    wrenches = np.asarray(wrenches)
    n = len(timestamps)
    if counts.shape != (n, 3) or wrenches.shape != (n, 3):
        raise ValueError(
            f"inconsistent frame shapes: {timestamps.shape}, {counts.shape}, {wrenches.shape}"
        )
    records = np.empty(n, dtype=RECORD_DTYPE)
    records["t"] = timestamps.astype(np.uint64)
    records["v"] = counts.astype(np.uint16)
    records["w"] = wrenches.astype(np.float64)
    payload = records.tobytes()
    out = np.empty((n, _RECORD), dtype=np.uint8)
    out[:, :_PAYLOAD] = np.frombuffer(payload, dtype=np.uint8).reshape(n, _PAYLOAD)
    crc_view = out[:, _PAYLOAD:]
    for i in range(n):
        crc = zlib.crc32(payload[i * _PAYLOAD : (i + 1) * _PAYLOAD])
        crc_view[i] = np.frombuffer(crc.to_bytes(4, "little"), dtype=np.uint8)
    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(out.tobytes())
    return n


def read_oft(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(timestamps, counts, wrenches); raises OftCrcError on the first bad record."""
    with open(path, "rb") as handle:
        blob = handle.read()
    if not blob.startswith(MAGIC):
        raise OftFormatError(f"{path} lacks the OFT1 magic")
    body = blob[len(MAGIC) :]
    if len(body) % _RECORD:
        raise OftFormatError(
            f"{path} has a truncated record: {len(body)} bytes is not a multiple of {_RECORD}"
        )
    n = len(body) // _RECORD
    raw = np.frombuffer(body, dtype=np.uint8).reshape(n, _RECORD)
    stored = raw[:, _PAYLOAD:].copy().view("<u4").ravel()
    payload = raw[:, :_PAYLOAD].tobytes()
    for i in range(n):
        if zlib.crc32(payload[i * _PAYLOAD : (i + 1) * _PAYLOAD]) != int(stored[i]):
            raise OftCrcError(i)
    records = np.frombuffer(payload, dtype=RECORD_DTYPE)
    return (
        records["t"].copy(),
        records["v"].copy(),
        records["w"].copy(),
    )
