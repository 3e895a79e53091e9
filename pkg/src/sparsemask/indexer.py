"""Impact-quantized inverted index.

Postings live in CSR form: ``offsets[t]:offsets[t+1]`` slices ``refs`` (uint32
passage handles, ascending) and ``impacts`` (uint16, >= 1) for term ``t``.

On-disk layout (little-endian)::

    header   magic b"SPMXIDX\\0" | u16 version | u16 reserved | u64 file length
    meta     u32 vocab_size | u32 scale | u16 len | mask label (utf-8)
             u32 n_passages | u64 n_postings
    table    n_passages x (u16 len | doc_id utf-8 | u32 ordinal)
    offsets  (vocab_size + 1) x u64
    refs     n_postings x u32
    impacts  n_postings x u16
    trailer  u32 CRC-32 of every preceding byte

Build wall-clock seconds are kept on the in-memory index only, so saving the
same build twice produces identical bytes.
"""

from __future__ import annotations

import io
import os
import struct
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .corpus import VectorRecord, parse_passage_id
from .sparse_core import MaskConfig, parse_mask

MAGIC = b"SPMXIDX\0"
VERSION = 1
DEFAULT_SCALE = 100
MAX_IMPACT = 65535

_HEADER = struct.Struct("<8sHHQ")


class IndexFormatError(ValueError):
    """Not a readable index file."""


class IndexVersionError(IndexFormatError):
    pass


class IndexTruncatedError(IndexFormatError):
    pass


class IndexChecksumError(IndexFormatError):
    pass


class IndexBuildError(ValueError):
    pass


@dataclass(frozen=True)
class Posting:
    passage_ref: int
    impact: int


def quantize(w, scale: int = DEFAULT_SCALE):
    """``round(w * scale)`` clamped to ``[1, 65535]``; works on scalars and arrays."""
    q = np.clip(np.round(np.asarray(w, dtype=np.float64) * scale), 1, MAX_IMPACT).astype(np.uint16)
    return int(q) if q.ndim == 0 else q


@dataclass(eq=False)
class ImpactIndex:
    vocab_size: int
    scale: int
    mask_label: str
    passage_table: list[tuple[str, int]]
    offsets: np.ndarray
    refs: np.ndarray
    impacts: np.ndarray
    build_seconds: float | None = None
    _doc_cache: tuple | None = field(default=None, repr=False)

    @property
    def mask(self) -> MaskConfig | None:
        return parse_mask(self.mask_label) if self.mask_label != "none" else None

    @property
    def num_passages(self) -> int:
        return len(self.passage_table)

    @property
    def num_postings(self) -> int:
        return int(self.refs.size)

    def postings(self, term: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.offsets[term], self.offsets[term + 1]
        return self.refs[lo:hi], self.impacts[lo:hi]

    def posting_list(self, term: int) -> list[Posting]:
        refs, imps = self.postings(term)
        return [Posting(r, i) for r, i in zip(refs.tolist(), imps.tolist())]

    def terms_per_passage(self) -> np.ndarray:
        return np.bincount(self.refs, minlength=self.num_passages)

    def doc_lookup(self) -> tuple[list[str], np.ndarray]:
        """Sorted distinct doc ids and, per passage, the position of its doc in that list."""
        if self._doc_cache is None:
            doc_ids = sorted({d for d, _ in self.passage_table})
            pos = {d: i for i, d in enumerate(doc_ids)}
            passage_doc = np.fromiter((pos[d] for d, _ in self.passage_table), dtype=np.int64,
                                      count=self.num_passages)
            self._doc_cache = (doc_ids, passage_doc)
        return self._doc_cache

    def same_content(self, other: "ImpactIndex") -> bool:
        return (
            self.vocab_size == other.vocab_size
            and self.scale == other.scale
            and self.mask_label == other.mask_label
            and self.passage_table == other.passage_table
            and np.array_equal(self.offsets, other.offsets)
            and np.array_equal(self.refs, other.refs)
            and np.array_equal(self.impacts, other.impacts)
        )


def build_index(
    records: Iterable[VectorRecord],
    mask: MaskConfig | None,
    scale: int = DEFAULT_SCALE,
    vocab_size: int | None = None,
) -> ImpactIndex:
    """Mask, quantize and invert passage vectors; passage refs follow input order."""
    if scale <= 0:
        raise IndexBuildError("scale must be positive")
    start = time.perf_counter()
    table: list[tuple[str, int]] = []
    seen: set[tuple[str, int]] = set()
    lists: dict[int, list[tuple[int, int]]] = {}
    for rec in records:
        try:
            key = parse_passage_id(rec.id)
        except ValueError as exc:
            raise IndexBuildError(str(exc)) from None
        if key in seen:
            raise IndexBuildError(f"duplicate passage {rec.id!r}")
        seen.add(key)
        v = rec.vector
        if vocab_size is None:
            vocab_size = v.vocab_size
        elif v.vocab_size != vocab_size:
            raise IndexBuildError(f"{rec.id}: vocab_size {v.vocab_size} != {vocab_size}")
        ref = len(table)
        table.append(key)
        if mask is not None:
            v = mask.apply(v)
        if v.nnz == 0:
            continue
        for t, imp in zip(v.terms.tolist(), quantize(v.weights, scale).tolist()):
            bucket = lists.get(t)
            if bucket is None:
                lists[t] = [(ref, imp)]
            else:
                bucket.append((ref, imp))
    vocab_size = vocab_size or 1

    counts = np.zeros(vocab_size, dtype=np.uint64)
    for t, bucket in lists.items():
        counts[t] = len(bucket)
    offsets = np.zeros(vocab_size + 1, dtype=np.uint64)
    np.cumsum(counts, out=offsets[1:])
    total = int(offsets[-1])
    refs = np.empty(total, dtype=np.uint32)
    impacts = np.empty(total, dtype=np.uint16)
    for t in sorted(lists):
        lo, hi = int(offsets[t]), int(offsets[t + 1])
        arr = np.asarray(lists[t], dtype=np.int64)
        refs[lo:hi] = arr[:, 0]
        impacts[lo:hi] = arr[:, 1]
    elapsed = time.perf_counter() - start
    return ImpactIndex(
        vocab_size=vocab_size,
        scale=int(scale),
        mask_label="none" if mask is None else mask.label,
        passage_table=table,
        offsets=offsets,
        refs=refs,
        impacts=impacts,
        build_seconds=elapsed,
    )


# -- persistence ---------------------------------------------------------------


def index_to_bytes(index: ImpactIndex) -> bytes:
    body = io.BytesIO()
    label = index.mask_label.encode("utf-8")
    body.write(struct.pack("<IIH", index.vocab_size, index.scale, len(label)))
    body.write(label)
    body.write(struct.pack("<IQ", index.num_passages, index.num_postings))
    for doc_id, ordinal in index.passage_table:
        raw = doc_id.encode("utf-8")
        body.write(struct.pack("<H", len(raw)))
        body.write(raw)
        body.write(struct.pack("<I", ordinal))
    body.write(index.offsets.astype("<u8").tobytes())
    body.write(index.refs.astype("<u4").tobytes())
    body.write(index.impacts.astype("<u2").tobytes())
    payload = body.getvalue()
    length = _HEADER.size + len(payload) + 4
    head = _HEADER.pack(MAGIC, VERSION, 0, length)
    crc = zlib.crc32(payload, zlib.crc32(head))
    return head + payload + struct.pack("<I", crc)


def save_index(index: ImpactIndex, path) -> Path:
    """Write ``index`` to ``path``; a crash mid-write leaves no partial file."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(index_to_bytes(index))
    os.replace(tmp, path)
    return path


class _Reader:
    def __init__(self, buf: bytes, pos: int, end: int):
        self.buf, self.pos, self.end = buf, pos, end

    def take(self, n: int) -> bytes:
        if self.pos + n > self.end:
            raise IndexTruncatedError("index payload ends early")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, dtype: str, count: int) -> np.ndarray:
        return np.frombuffer(self.take(np.dtype(dtype).itemsize * count), dtype=dtype).copy()


def index_from_bytes(buf: bytes) -> ImpactIndex:
    if len(buf) < _HEADER.size:
        if MAGIC.startswith(buf[: len(MAGIC)]) and buf:
            raise IndexTruncatedError("file shorter than the index header")
        raise IndexFormatError("not an index file")
    magic, version, _, length = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise IndexFormatError("not an index file (bad magic)")
    if version != VERSION:
        raise IndexVersionError(f"index version {version}, this build reads {VERSION}")
    if len(buf) < length:
        raise IndexTruncatedError(f"index file has {len(buf)} bytes, header declares {length}")
    if len(buf) > length:
        raise IndexFormatError(f"{len(buf) - length} trailing bytes after the index")
    (crc,) = struct.unpack_from("<I", buf, length - 4)
    if zlib.crc32(buf[: length - 4]) != crc:
        raise IndexChecksumError("index checksum mismatch")

    r = _Reader(buf, _HEADER.size, length - 4)
    vocab_size, scale, label_len = r.unpack("<IIH")
    label = r.take(label_len).decode("utf-8")
    n_passages, n_postings = r.unpack("<IQ")
    table = []
    for _ in range(n_passages):
        (n,) = r.unpack("<H")
        doc_id = r.take(n).decode("utf-8")
        (ordinal,) = r.unpack("<I")
        table.append((doc_id, ordinal))
    offsets = r.array("<u8", vocab_size + 1).astype(np.uint64)
    refs = r.array("<u4", n_postings).astype(np.uint32)
    impacts = r.array("<u2", n_postings).astype(np.uint16)
    if r.pos != r.end or int(offsets[-1]) != n_postings:
        raise IndexFormatError("inconsistent index sections")
    return ImpactIndex(vocab_size, scale, label, table, offsets, refs, impacts)


def load_index(path) -> ImpactIndex:
    with open(path, "rb") as f:
        return index_from_bytes(f.read())


# -- build statistics ------------------------------------------------------------

STATS_HEADER = ["mask", "passages", "postings", "mean_terms", "build_seconds"]


def build_stats_row(index: ImpactIndex) -> list:
    mean_terms = index.num_postings / index.num_passages if index.num_passages else 0.0
    return [
        index.mask_label,
        index.num_passages,
        index.num_postings,
        f"{mean_terms:.6f}",
        "" if index.build_seconds is None else f"{index.build_seconds:.6f}",
    ]

