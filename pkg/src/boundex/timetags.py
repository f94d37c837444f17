"""Channel-tagged photon detection streams and the ``.ttag`` binary format.

Layout (little-endian)::

    magic        4 bytes  b"TTAG"
    version      u32      1
    time_unit_fs u64
    record_count u64
    records      record_count x {timestamp_ticks u64, channel u32, flags u32}

Flag bit 0 marks dark/background counts. It is diagnostic only and the
analysis code never reads it.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, FormatError

MAGIC = b"TTAG"
VERSION = 1
HEADER = struct.Struct("<4sIQQ")
RECORD_DTYPE = np.dtype([("timestamp", "<u8"), ("channel", "<u4"), ("flags", "<u4")])
FLAG_DARK = 1


@dataclass
class TimeTagStream:
    timestamps: np.ndarray
    channels: np.ndarray
    flags: np.ndarray = None
    time_unit_fs: int = 1
    span_ticks: int = None  # acquisition span; defaults to last tag + 1
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.timestamps = np.ascontiguousarray(self.timestamps, dtype=np.uint64)
        self.channels = np.ascontiguousarray(self.channels, dtype=np.uint32)
        if self.flags is None:
            self.flags = np.zeros(self.timestamps.size, dtype=np.uint32)
        self.flags = np.ascontiguousarray(self.flags, dtype=np.uint32)
        if not (self.timestamps.shape == self.channels.shape == self.flags.shape):
            raise DomainError("timestamps, channels and flags must have equal length")
        if self.time_unit_fs <= 0:
            raise DomainError("time_unit_fs must be positive")
        if self.timestamps.size > 1 and np.any(self.timestamps[1:] < self.timestamps[:-1]):
            raise DomainError("timestamps must be non-decreasing")
        if self.span_ticks is None:
            self.span_ticks = int(self.timestamps[-1]) + 1 if self.timestamps.size else 0

    def __len__(self):
        return int(self.timestamps.size)

    def __eq__(self, other):
        if not isinstance(other, TimeTagStream):
            return NotImplemented
        return (self.time_unit_fs == other.time_unit_fs
                and np.array_equal(self.timestamps, other.timestamps)
                and np.array_equal(self.channels, other.channels)
                and np.array_equal(self.flags, other.flags))

    @property
    def span_s(self):
        return self.span_ticks * self.time_unit_fs * 1e-15

    def channel(self, ch):
        """Timestamps (int64 ticks) of one channel."""
        return self.timestamps[self.channels == ch].astype(np.int64)

    def counts_per_channel(self, n_channels=2):
        return np.bincount(self.channels, minlength=n_channels)

    def shifted(self, ticks):
        return TimeTagStream(self.timestamps + np.uint64(ticks), self.channels, self.flags,
                             self.time_unit_fs, self.span_ticks + int(ticks))

    def relabeled(self, mapping):
        ch = np.asarray([mapping.get(int(c), int(c)) for c in range(int(self.channels.max(initial=0)) + 1)],
                        dtype=np.uint32)
        return TimeTagStream(self.timestamps, ch[self.channels], self.flags,
                             self.time_unit_fs, self.span_ticks)

    def window(self, start_tick, stop_tick):
        """Tags with ``start <= t < stop``; the span becomes the window length."""
        m = (self.timestamps >= start_tick) & (self.timestamps < stop_tick)
        return TimeTagStream(self.timestamps[m], self.channels[m], self.flags[m],
                             self.time_unit_fs, int(stop_tick - start_tick))

    @classmethod
    def merge(cls, *streams):
        units = {s.time_unit_fs for s in streams}
        if len(units) != 1:
            raise DomainError("cannot merge streams with different time units")
        ts = np.concatenate([s.timestamps for s in streams])
        ch = np.concatenate([s.channels for s in streams])
        fl = np.concatenate([s.flags for s in streams])
        order = np.lexsort((ch, ts))
        span = max(s.span_ticks for s in streams)
        return cls(ts[order], ch[order], fl[order], units.pop(), span)


def write_ttag_bytes(stream: TimeTagStream) -> bytes:
    rec = np.empty(len(stream), dtype=RECORD_DTYPE)
    rec["timestamp"] = stream.timestamps
    rec["channel"] = stream.channels
    rec["flags"] = stream.flags
    return HEADER.pack(MAGIC, VERSION, stream.time_unit_fs, len(stream)) + rec.tobytes()


def write_ttag(path, stream: TimeTagStream):
    Path(path).write_bytes(write_ttag_bytes(stream))


def read_ttag_bytes(data: bytes) -> TimeTagStream:
    if len(data) < HEADER.size:
        raise FormatError("file shorter than header", offset=len(data))
    magic, version, unit, count = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    body = len(data) - HEADER.size
    have = body // RECORD_DTYPE.itemsize
    if have < count:
        raise FormatError(f"truncated record section: header declares {count} records, found {have}",
                          offset=HEADER.size + have * RECORD_DTYPE.itemsize)
    if body != count * RECORD_DTYPE.itemsize:
        raise FormatError("trailing bytes after record section",
                          offset=HEADER.size + count * RECORD_DTYPE.itemsize)
    rec = np.frombuffer(data, dtype=RECORD_DTYPE, count=count, offset=HEADER.size)
    return TimeTagStream(rec["timestamp"].copy(), rec["channel"].copy(), rec["flags"].copy(), unit)


def read_ttag(path) -> TimeTagStream:
    return read_ttag_bytes(Path(path).read_bytes())
