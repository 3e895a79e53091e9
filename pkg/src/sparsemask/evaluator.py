"""Effectiveness and efficiency measurements.

AP is binary: a judgment with relevance > 0 counts as relevant. Queries whose
qrels hold no relevant document are dropped before evaluation.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .indexer import ImpactIndex
from .searcher import SearchConfig, search
from .sparse_core import SparseVector

WARMUP_QUERIES = 10


class EvaluationError(ValueError):
    pass


class QRels(dict):
    """``{qid: {docid: rel}}`` with helpers for the binary-relevance view."""

    def relevant(self, qid: str) -> set[str]:
        return {d for d, r in self.get(qid, {}).items() if r > 0}

    def filtered(self) -> "QRels":
        """Only queries with at least one relevant judgment."""
        return QRels({q: j for q, j in self.items() if any(r > 0 for r in j.values())})


def read_qrels(path) -> QRels:
    qrels = QRels()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise EvaluationError(f"{path}:{lineno}: expected 'qid 0 docid rel'")
            qid, _, docid, rel = parts
            try:
                rel_i = int(rel)
            except ValueError:
                raise EvaluationError(f"{path}:{lineno}: relevance {rel!r} is not an integer") from None
            judged = qrels.setdefault(qid, {})
            if docid in judged:
                raise EvaluationError(f"{path}:{lineno}: duplicate judgment ({qid}, {docid})")
            judged[docid] = rel_i
    return qrels


def write_qrels(qrels: Mapping[str, Mapping[str, int]], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for qid, judged in qrels.items():
            for docid, rel in judged.items():
                f.write(f"{qid} 0 {docid} {rel}\n")


def average_precision(ranked: Sequence[str], relevant: set[str] | frozenset[str]) -> float:
    if not relevant:
        raise EvaluationError("average_precision needs at least one relevant document")
    if len(set(ranked)) != len(ranked):
        raise EvaluationError("ranking contains duplicate doc ids")
    hits = 0
    total = 0.0
    for i, doc in enumerate(ranked, 1):
        if doc in relevant:
            hits += 1
            total += hits / i
    return total / len(relevant)


def per_query_ap(run: Mapping[str, Sequence[str]], qrels: QRels) -> dict[str, float]:
    usable = qrels.filtered()
    out = {}
    for qid, ranked in run.items():
        if qid not in usable:
            raise EvaluationError(f"run query {qid!r} has no relevant judgments")
        out[qid] = average_precision(ranked, usable.relevant(qid))
    return out


def mean_average_precision(run: Mapping[str, Sequence[str]], qrels: QRels) -> float:
    """Unweighted mean of per-query AP over the run's queries."""
    aps = per_query_ap(run, qrels)
    if not aps:
        raise EvaluationError("no queries to evaluate")
    return sum(aps.values()) / len(aps)


@dataclass(frozen=True)
class Throughput:
    queries_per_second: float
    queries: int
    elapsed_seconds: float
    lower_bound: bool = False


def measure_throughput(
    index: ImpactIndex,
    queries: Sequence[SparseVector],
    cfg: SearchConfig = SearchConfig(),
    warmup: int = WARMUP_QUERIES,
    repeat: int = 1,
) -> Throughput:
    """Single-threaded queries/sec over ``repeat`` passes of ``queries``.

    ``warmup`` queries (cycling the batch) run first and are not timed. When
    the batch finishes below the clock resolution the elapsed time is taken as
    one tick and the result is flagged as a lower bound.
    """
    queries = list(queries)
    if not queries:
        raise EvaluationError("measure_throughput needs at least one query")
    for i in range(warmup):
        search(index, queries[i % len(queries)], cfg)
    batch = queries * repeat
    start = time.perf_counter()
    for q in batch:
        search(index, q, cfg)
    elapsed = time.perf_counter() - start
    tick = time.get_clock_info("perf_counter").resolution
    lower_bound = elapsed <= tick
    if lower_bound:
        elapsed = tick
    return Throughput(len(batch) / elapsed, len(batch), elapsed, lower_bound)


@dataclass
class TermCountStats:
    count: int
    mean: float
    histogram: dict[int, int]
    bucket_width: int
    counts: list[int] = field(repr=False, default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["histogram"] = {str(k): v for k, v in self.histogram.items()}
        return d


def term_count_distribution(vectors: Iterable[SparseVector], bucket_width: int = 10) -> TermCountStats:
    """nnz per vector, bucketed by ``bucket_width`` (keys are bucket lower bounds)."""
    if bucket_width < 1:
        raise ValueError("bucket_width must be >= 1")
    counts = [v.nnz for v in vectors]
    hist: dict[int, int] = {}
    for n in counts:
        b = (n // bucket_width) * bucket_width
        hist[b] = hist.get(b, 0) + 1
    mean = float(np.mean(counts)) if counts else 0.0
    return TermCountStats(len(counts), mean, dict(sorted(hist.items())), bucket_width, counts)


REPORT_FIELDS = ["map", "queries", "queries_per_second", "qps_lower_bound", "mean_terms_selected"]


@dataclass
class EvalReport:
    map: float
    per_query_ap: dict[str, float]
    queries_per_second: float | None = None
    qps_lower_bound: bool = False
    mean_terms_selected: float | None = None
    term_count_histogram: dict[int, int] = field(default_factory=dict)

    def csv_row(self) -> list:
        return [
            f"{self.map:.6f}",
            len(self.per_query_ap),
            "" if self.queries_per_second is None else f"{self.queries_per_second:.3f}",
            int(self.qps_lower_bound),
            "" if self.mean_terms_selected is None else f"{self.mean_terms_selected:.4f}",
        ]

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(REPORT_FIELDS)
        w.writerow(self.csv_row())
        return buf.getvalue()

    def to_json(self) -> str:
        d = asdict(self)
        d["term_count_histogram"] = {str(k): v for k, v in self.term_count_histogram.items()}
        return json.dumps(d, indent=2, sort_keys=True)
