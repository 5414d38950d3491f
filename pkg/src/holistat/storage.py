"""Columnar trace encoding and the compressed-storage growth probe.

Layout of an encoded buffer (little-endian)::

    b"HSTR" u8 version  u32 n_series
    n_series x { u16 len, node utf-8, u16 len, metric utf-8, u32 base_interval, u64 count }
    timestamp column: per series, i64 first timestamp then i64 deltas
    presence column:  per series, one u8 per sample
    value column:     per series, one f64 per sample (NaN where missing)
"""

from __future__ import annotations

import bz2
import lzma
import struct
import zlib
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List

import numpy as np

from .errors import InvalidInput, TraceFormatError
from .model import MetricSeries, resample

MAGIC = b"HSTR"
VERSION = 1
EXTENSION = ".hstrace"

COMPRESSORS: Dict[str, Callable[[bytes], bytes]] = {
    "zlib": lambda b: zlib.compress(b, 9),
    "lzma": lambda b: lzma.compress(b, preset=6),
    "bz2": lambda b: bz2.compress(b, 9),
}
DEFAULT_COMPRESSOR = "zlib"


def encode_columnar(series) -> bytes:
    series = list(series)
    if not series:
        raise InvalidInput("nothing to encode")
    head = [MAGIC, struct.pack("<BI", VERSION, len(series))]
    ts_col, pr_col, val_col = [], [], []
    for s in series:
        node = s.node_id.encode()
        metric = s.metric_name.encode()
        head.append(struct.pack("<H", len(node)) + node + struct.pack("<H", len(metric)) + metric)
        head.append(struct.pack("<IQ", s.base_interval, len(s)))
        ts = s.timestamps.astype("<i8")
        if len(ts):
            ts_col.append(np.concatenate([ts[:1], np.diff(ts)]).astype("<i8").tobytes())
        pr_col.append(s.present.astype(np.uint8).tobytes())
        val_col.append(np.where(s.present, s.values, np.nan).astype("<f8").tobytes())
    return b"".join(head + ts_col + pr_col + val_col)


def decode_columnar(buf: bytes) -> List[MetricSeries]:
    if buf[:4] != MAGIC:
        raise TraceFormatError("not an hstrace buffer (bad magic)")
    version, n = struct.unpack_from("<BI", buf, 4)
    if version != VERSION:
        raise TraceFormatError(f"unsupported hstrace version {version}")
    pos = 9
    headers = []
    for _ in range(n):
        (ln,) = struct.unpack_from("<H", buf, pos)
        node = buf[pos + 2:pos + 2 + ln].decode()
        pos += 2 + ln
        (lm,) = struct.unpack_from("<H", buf, pos)
        metric = buf[pos + 2:pos + 2 + lm].decode()
        pos += 2 + lm
        base, count = struct.unpack_from("<IQ", buf, pos)
        pos += 12
        headers.append((node, metric, base, count))
    cols = []
    for dtype, width in (("<i8", 8), ("u1", 1), ("<f8", 8)):
        col = []
        for *_, count in headers:
            col.append(np.frombuffer(buf, dtype=dtype, count=count, offset=pos))
            pos += count * width
        cols.append(col)
    if pos != len(buf):
        raise TraceFormatError(f"trailing {len(buf) - pos} bytes in hstrace buffer")
    out = []
    for (node, metric, base, _), deltas, pres, vals in zip(headers, *cols):
        out.append(MetricSeries(node, metric, np.cumsum(deltas), vals, pres.astype(bool), base))
    return out


def write_hstrace(path, series):
    data = encode_columnar(series)
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


def read_hstrace(path):
    with open(path, "rb") as fh:
        return decode_columnar(fh.read())


@dataclass
class GranularityEntry:
    granularity: int
    samples: int
    raw_bytes: int
    compressed_bytes: int


@dataclass
class StorageReport:
    compressor: str
    entries: List[GranularityEntry] = field(default_factory=list)
    fine: int = 0
    coarse: int = 0
    sample_ratio: float = 0.0
    raw_ratio: float = 0.0
    compressed_ratio: float = 0.0

    def to_dict(self):
        return asdict(self)


def compression_study(series, granularities=(15, 60, 300, 600), compressor=DEFAULT_COMPRESSOR) -> StorageReport:
    """Resample, encode and compress at each granularity; compare finest with coarsest."""
    series = list(series)
    if not series:
        raise InvalidInput("no series to study")
    if compressor not in COMPRESSORS:
        raise InvalidInput(f"unknown compressor {compressor!r}; choose from {sorted(COMPRESSORS)}")
    compress = COMPRESSORS[compressor]
    report = StorageReport(compressor)
    for g in sorted(int(x) for x in granularities):
        resampled = [resample(s, g) for s in series]
        raw = encode_columnar(resampled)
        report.entries.append(GranularityEntry(g, sum(len(s) for s in resampled), len(raw), len(compress(raw))))
    fine, coarse = report.entries[0], report.entries[-1]
    report.fine, report.coarse = fine.granularity, coarse.granularity
    report.sample_ratio = fine.samples / coarse.samples
    report.raw_ratio = fine.raw_bytes / coarse.raw_bytes
    report.compressed_ratio = fine.compressed_bytes / coarse.compressed_bytes
    return report
