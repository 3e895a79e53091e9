"""Term-at-a-time retrieval over an :class:`ImpactIndex` with MaxP aggregation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .indexer import ImpactIndex, quantize
from .sparse_core import MaskConfig, SparseVector

DEFAULT_DEPTH = 1000


class SearchError(ValueError):
    pass


@dataclass(frozen=True)
class ScoredDoc:
    doc_id: str
    score: int
    rank: int


@dataclass(frozen=True)
class SearchConfig:
    mask: MaskConfig | None = None
    depth: int = field(default=DEFAULT_DEPTH)

    def __post_init__(self):
        if self.depth < 1:
            raise SearchError("depth must be >= 1")


def quantize_query(q: SparseVector, index: ImpactIndex) -> SparseVector:
    """Replace weights with impacts at the index's scale (kept as floats)."""
    if q.nnz == 0:
        return q
    return SparseVector(q.terms, quantize(q.weights, index.scale).astype(np.float64), q.vocab_size)


def _accumulate(index: ImpactIndex, q: SparseVector) -> np.ndarray:
    if q.nnz and int(q.terms[-1]) >= index.vocab_size:
        raise SearchError(f"query term {int(q.terms[-1])} >= index vocab_size {index.vocab_size}")
    acc = np.zeros(index.num_passages, dtype=np.int64)
    offsets, refs, impacts = index.offsets, index.refs, index.impacts
    for t, w in zip(q.terms.tolist(), q.weights.tolist()):
        lo, hi = offsets[t], offsets[t + 1]
        if lo == hi:
            continue
        # refs are unique within one posting list, so buffered += is safe
        acc[refs[lo:hi]] += int(w) * impacts[lo:hi].astype(np.int64)
    return acc


def score_passages(index: ImpactIndex, q: SparseVector) -> dict[int, int]:
    """Integer scores for every passage sharing a term with the quantized query."""
    acc = _accumulate(index, q)
    nz = np.flatnonzero(acc)
    return dict(zip(nz.tolist(), acc[nz].tolist()))


def maxp_aggregate(
    passage_scores: Mapping[int, int], passage_table: Sequence[tuple[str, int]]
) -> list[ScoredDoc]:
    """Document score is its best passage; order is (score desc, doc_id asc)."""
    best: dict[str, int] = {}
    for ref, s in passage_scores.items():
        doc_id = passage_table[ref][0]
        if s > best.get(doc_id, s - 1):
            best[doc_id] = s
    ordered = sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))
    return [ScoredDoc(d, s, i) for i, (d, s) in enumerate(ordered, 1)]


def search(index: ImpactIndex, query: SparseVector, cfg: SearchConfig = SearchConfig()) -> list[ScoredDoc]:
    """Mask, quantize, score and MaxP-rank one query, truncated to ``cfg.depth``."""
    if query.vocab_size != index.vocab_size:
        raise SearchError(f"query vocab_size {query.vocab_size} != index {index.vocab_size}")
    q = cfg.mask.apply(query) if cfg.mask is not None else query
    acc = _accumulate(index, quantize_query(q, index))
    hit = np.flatnonzero(acc)
    if hit.size == 0:
        return []
    doc_ids, passage_doc = index.doc_lookup()
    doc_scores = np.zeros(len(doc_ids), dtype=np.int64)
    np.maximum.at(doc_scores, passage_doc[hit], acc[hit])
    cand = np.flatnonzero(doc_scores)
    # cand is ascending in doc position, i.e. doc_id order; stable sort keeps it for ties
    order = cand[np.argsort(-doc_scores[cand], kind="stable")][: cfg.depth]
    scores = doc_scores[order].tolist()
    return [ScoredDoc(doc_ids[d], s, i) for i, (d, s) in enumerate(zip(order.tolist(), scores), 1)]


def search_all(
    index: ImpactIndex, queries: Iterable[tuple[str, SparseVector]], cfg: SearchConfig = SearchConfig()
) -> dict[str, list[ScoredDoc]]:
    return {qid: search(index, q, cfg) for qid, q in queries}


def write_run(results: Mapping[str, Sequence[ScoredDoc]], tag: str, path) -> None:
    """Six-column TREC run; queries in mapping order, scores as integers."""
    if not tag or any(c.isspace() for c in tag):
        raise SearchError("run tag must be a non-empty token without whitespace")
    with open(path, "w", encoding="utf-8") as f:
        for qid, docs in results.items():
            for d in docs:
                f.write(f"{qid} Q0 {d.doc_id} {d.rank} {int(d.score)} {tag}\n")


def read_run(path) -> dict[str, list[str]]:
    """Doc ids per query, ordered by rank, from a TREC run file."""
    rows: dict[str, list[tuple[int, str]]] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 6:
                raise SearchError(f"{path}:{lineno}: expected 6 columns, got {len(parts)}")
            qid, _, docid, rank, _score, _tag = parts
            try:
                rows.setdefault(qid, []).append((int(rank), docid))
            except ValueError:
                raise SearchError(f"{path}:{lineno}: rank is not an integer") from None
    return {qid: [d for _, d in sorted(r)] for qid, r in rows.items()}
