"""Sweep driver: mask grids for documents and queries, one CSV row per trial."""

from __future__ import annotations

import csv
import enum
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import VectorRecord
from .evaluator import QRels, mean_average_precision, measure_throughput, term_count_distribution
from .indexer import DEFAULT_SCALE, ImpactIndex, build_index
from .searcher import DEFAULT_DEPTH, SearchConfig, search
from .sparse_core import MaskConfig, TopK, TopP

log = logging.getLogger(__name__)

DEFAULT_P_GRID = (0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95, 0.99)
REFERENCE_P = 0.98
K_DEFAULT_FRACTION = Fraction(1, 100)
K_GRID_FRACTIONS = tuple(Fraction(5, 1000) + i * Fraction(25, 10000) for i in range(7))

SWEEP_FIELDS = [
    "trial",
    "doc_mask",
    "query_mask",
    "map",
    "queries_per_second",
    "qps_lower_bound",
    "indexing_seconds",
    "postings",
    "mean_terms_docs",
    "mean_terms_queries",
    "queries",
    "seed",
    "error",
]
TIMING_FIELDS = ("queries_per_second", "qps_lower_bound", "indexing_seconds")


def default_k(vocab_size: int) -> int:
    """``floor(0.01 * |V|)``; 352 for a 35,200-term vocabulary."""
    return math.floor(K_DEFAULT_FRACTION * vocab_size)


def k_grid(vocab_size: int) -> list[int]:
    """k from ``0.005|V|`` to ``0.02|V|`` in steps of ``0.0025|V|``; includes the default."""
    ks = [math.floor(f * vocab_size) for f in K_GRID_FRACTIONS]
    return sorted(set(k for k in ks if k > 0))


def p_grid() -> list[TopP]:
    return [TopP(p) for p in DEFAULT_P_GRID]


def reference_pair(vocab_size: int) -> tuple[TopK, TopP]:
    """Top-k at the default k next to top-p at 0.98, the closely matched pair."""
    return TopK(default_k(vocab_size)), TopP(REFERENCE_P)


class Pairing(enum.Enum):
    DIAGONAL = "diagonal"
    CROSS_EXCLUDING_EQUAL = "cross"


@dataclass(frozen=True)
class SweepSpec:
    doc_masks: tuple[MaskConfig, ...]
    query_masks: tuple[MaskConfig, ...]
    pairing: Pairing = Pairing.DIAGONAL

    def __post_init__(self):
        object.__setattr__(self, "doc_masks", tuple(self.doc_masks))
        object.__setattr__(self, "query_masks", tuple(self.query_masks))
        if not self.doc_masks or not self.query_masks:
            raise ValueError("sweep needs at least one document and one query mask")
        if self.pairing is Pairing.DIAGONAL and self.doc_masks != self.query_masks:
            raise ValueError("diagonal sweeps use the same masks on both sides")

    @classmethod
    def diagonal(cls, masks: Iterable[MaskConfig]) -> "SweepSpec":
        masks = tuple(masks)
        return cls(masks, masks, Pairing.DIAGONAL)

    @classmethod
    def cross(cls, masks: Iterable[MaskConfig]) -> "SweepSpec":
        masks = tuple(masks)
        return cls(masks, masks, Pairing.CROSS_EXCLUDING_EQUAL)

    def trials(self) -> list[tuple[MaskConfig, MaskConfig]]:
        if self.pairing is Pairing.DIAGONAL:
            return [(m, m) for m in self.doc_masks]
        return [(d, q) for d in self.doc_masks for q in self.query_masks if d != q]


@dataclass
class SweepResult:
    trial: int
    doc_mask: str
    query_mask: str
    map: float | None = None
    queries_per_second: float | None = None
    qps_lower_bound: bool = False
    indexing_seconds: float | None = None
    postings: int | None = None
    mean_terms_docs: float | None = None
    mean_terms_queries: float | None = None
    queries: int = 0
    seed: int = 0
    error: str = ""

    def csv_row(self) -> list[str]:
        def f(x, spec):
            return "" if x is None else format(x, spec)

        return [
            str(self.trial),
            self.doc_mask,
            self.query_mask,
            f(self.map, ".8f"),
            f(self.queries_per_second, ".3f"),
            str(int(self.qps_lower_bound)),
            f(self.indexing_seconds, ".6f"),
            f(self.postings, "d"),
            f(self.mean_terms_docs, ".4f"),
            f(self.mean_terms_queries, ".4f"),
            str(self.queries),
            str(self.seed),
            self.error,
        ]


@dataclass
class SweepOutcome:
    results: list[SweepResult]
    doc_terms: dict[str, dict] = field(default_factory=dict)
    query_terms: dict[str, dict] = field(default_factory=dict)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(SWEEP_FIELDS)
            for r in self.results:
                w.writerow(r.csv_row())

    def write_term_counts(self, path) -> None:
        blob = {"docs": self.doc_terms, "queries": self.query_terms}
        Path(path).write_text(json.dumps(blob, indent=1, sort_keys=True), encoding="utf-8")


def _timed_build(records, mask, scale, repeats) -> ImpactIndex:
    best = None
    for _ in range(max(1, repeats)):
        idx = build_index(records, mask, scale)
        if best is None or idx.build_seconds < best.build_seconds:
            best = idx
    return best


def _build_job(args):
    return _timed_build(*args)


def run_sweep(
    doc_records: Sequence[VectorRecord],
    query_records: Sequence[VectorRecord],
    qrels: QRels,
    spec: SweepSpec,
    *,
    out=None,
    scale: int = DEFAULT_SCALE,
    depth: int = DEFAULT_DEPTH,
    seed: int = 0,
    warmup: int = 10,
    index_repeats: int = 1,
    throughput_repeats: int = 1,
    workers: int = 1,
) -> SweepOutcome:
    """Run every trial of ``spec``; one index per distinct document mask.

    Queries without a relevant judgment are dropped up front. A failing trial
    is kept as a row with its ``error`` column set and the sweep moves on.
    ``workers > 1`` builds the document indexes in a process pool; searching
    and timing stay sequential.
    """
    doc_records = list(doc_records)
    usable = qrels.filtered()
    queries = [(r.id, r.vector) for r in query_records if r.id in usable]
    dropped = len(query_records) - len(queries)
    if dropped:
        log.info("skipping %d queries without relevant judgments", dropped)
    trials = spec.trials()

    indexes: dict[str, ImpactIndex | Exception] = {}
    order = list(dict.fromkeys(d for d, _ in trials))
    if workers > 1 and len(order) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            jobs = {m.label: pool.submit(_build_job, (doc_records, m, scale, index_repeats)) for m in order}
            for label, job in jobs.items():
                try:
                    indexes[label] = job.result()
                except Exception as exc:  # recorded per trial
                    indexes[label] = exc

    outcome = SweepOutcome([])
    for i, (dmask, qmask) in enumerate(trials):
        row = SweepResult(i, dmask.label, qmask.label, seed=seed, queries=len(queries))
        try:
            if dmask.label not in indexes:
                log.debug("building index for %s", dmask.label)
                try:
                    indexes[dmask.label] = _timed_build(doc_records, dmask, scale, index_repeats)
                except Exception as exc:
                    indexes[dmask.label] = exc
            index = indexes[dmask.label]
            if isinstance(index, Exception):
                raise index
            per_doc = index.terms_per_passage()
            row.indexing_seconds = index.build_seconds
            row.postings = index.num_postings
            row.mean_terms_docs = float(per_doc.mean()) if per_doc.size else 0.0
            if dmask.label not in outcome.doc_terms:
                outcome.doc_terms[dmask.label] = {
                    "mean": row.mean_terms_docs,
                    "counts": per_doc.tolist(),
                }

            cfg = SearchConfig(qmask, depth)
            masked = [qmask.apply(v) for _, v in queries]
            qstats = term_count_distribution(masked)
            row.mean_terms_queries = qstats.mean
            outcome.query_terms.setdefault(qmask.label, {"mean": qstats.mean, "counts": qstats.counts})

            run = {qid: [d.doc_id for d in search(index, v, cfg)] for qid, v in queries}
            row.map = mean_average_precision(run, usable)
            tp = measure_throughput(index, [v for _, v in queries], cfg, warmup, throughput_repeats)
            row.queries_per_second = tp.queries_per_second
            row.qps_lower_bound = tp.lower_bound
        except Exception as exc:
            log.warning("trial %d (%s / %s) failed: %s", i, dmask.label, qmask.label, exc)
            row.error = f"{type(exc).__name__}: {exc}".replace("\n", " ")
        outcome.results.append(row)
        log.info(
            "trial %d docs=%s queries=%s map=%s qps=%s",
            i, dmask.label, qmask.label, row.map, row.queries_per_second,
        )

    if out is not None:
        outcome.write_csv(out)
    return outcome


def read_sweep_csv(path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != SWEEP_FIELDS:
            raise ValueError(f"{path}: unexpected sweep header {reader.fieldnames}")
        return list(reader)


def strip_timing(rows: list[dict[str, str]]) -> list[dict[str, str]]:
    return [{k: v for k, v in r.items() if k not in TIMING_FIELDS} for r in rows]

