"""Seeded synthetic corpus of unmasked sparse vectors with graded qrels.

Background terms in every passage are drawn without replacement from a Zipf
law over a shuffled vocabulary. Each query is a "topic": a handful of terms
with heavy-tailed (lognormal) weights. Relevant documents receive a share of
their topic's terms in one passage at above-background weight, so masking
that trims the mid-weight tail of a document costs effectiveness.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import VectorRecord, passage_id, write_vectors
from .sparse_core import SparseVector


@dataclass(frozen=True)
class SyntheticConfig:
    vocab_size: int = 12_800
    n_docs: int = 1000
    n_queries: int = 50
    doc_nnz: tuple[int, int] = (100, 400)
    query_nnz: tuple[int, int] = (5, 30)
    passages_per_doc: tuple[int, int] = (1, 3)
    relevant_per_query: tuple[int, int] = (3, 8)
    zipf_exponent: float = 1.1
    doc_weight_sigma: float = 0.5
    query_weight_sigma: float = 1.0
    topic_share: float = 0.6
    topic_boost: float = 0.4
    seed: int = 0


@dataclass
class SyntheticCorpus:
    config: SyntheticConfig
    passages: list[VectorRecord]
    queries: list[VectorRecord]
    qrels: dict[str, dict[str, int]] = field(default_factory=dict)

    @property
    def vocab_size(self) -> int:
        return self.config.vocab_size

    def write(self, out_dir) -> dict[str, Path]:
        from .evaluator import write_qrels

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "docs": out / "docs.jsonl",
            "queries": out / "queries.jsonl",
            "qrels": out / "qrels.txt",
        }
        write_vectors(self.passages, paths["docs"])
        write_vectors(self.queries, paths["queries"])
        write_qrels(self.qrels, paths["qrels"])
        return paths


def _zipf_probs(n: int, exponent: float) -> np.ndarray:
    ranks = np.arange(1, n + 1, dtype=np.float64)
    p = ranks ** -exponent
    return p / p.sum()


def _vector(terms: dict[int, float], vocab_size: int) -> SparseVector:
    return SparseVector.from_mapping(terms, vocab_size)


def generate(config: SyntheticConfig | None = None, **overrides) -> SyntheticCorpus:
    """Build a corpus; identical config (including seed) gives identical output."""
    cfg = config or SyntheticConfig()
    if overrides:
        cfg = SyntheticConfig(**{**cfg.__dict__, **overrides})
    rng = np.random.default_rng(cfg.seed)
    V = cfg.vocab_size
    lo, hi = cfg.doc_nnz
    if not (0 < lo <= hi <= V):
        raise ValueError("doc_nnz must satisfy 0 < lo <= hi <= vocab_size")

    # popularity rank -> term id, so frequent terms are not the low ids
    by_rank = rng.permutation(V)
    background = _zipf_probs(V, cfg.zipf_exponent)

    topics = []
    for _ in range(cfg.n_queries):
        n = int(rng.integers(cfg.query_nnz[0], cfg.query_nnz[1] + 1))
        terms = rng.choice(V, size=n, replace=False)
        weights = rng.lognormal(0.0, cfg.query_weight_sigma, size=n)
        topics.append(dict(zip(terms.tolist(), weights.tolist())))

    doc_ids = [f"D{i:05d}" for i in range(cfg.n_docs)]
    injected: dict[tuple[int, int], list[int]] = {}  # (doc, passage) -> topics
    qrels: dict[str, dict[str, int]] = {}
    n_passages = rng.integers(cfg.passages_per_doc[0], cfg.passages_per_doc[1] + 1, size=cfg.n_docs)
    for qi in range(cfg.n_queries):
        n_rel = int(rng.integers(cfg.relevant_per_query[0], cfg.relevant_per_query[1] + 1))
        docs = rng.choice(cfg.n_docs, size=min(n_rel, cfg.n_docs), replace=False)
        judged = {}
        for d in docs.tolist():
            ordinal = int(rng.integers(0, n_passages[d]))
            injected.setdefault((d, ordinal), []).append(qi)
            judged[doc_ids[d]] = int(rng.integers(1, 3))
        for d in rng.choice(cfg.n_docs, size=3, replace=False).tolist():
            judged.setdefault(doc_ids[d], 0)
        qrels[f"Q{qi:03d}"] = judged

    passages = []
    for d, doc_id in enumerate(doc_ids):
        for ordinal in range(int(n_passages[d])):
            # mode at the upper end: most passages are long
            nnz = int(np.floor(rng.triangular(lo, hi, hi + 1)))
            nnz = min(max(nnz, lo), hi)
            ranks = rng.choice(V, size=nnz, replace=False, p=background)
            weights = rng.lognormal(0.0, cfg.doc_weight_sigma, size=nnz)
            vec = dict(zip(by_rank[ranks].tolist(), weights.tolist()))
            placed = []
            for qi in injected.get((d, ordinal), []):
                topic_terms = list(topics[qi])
                take = max(1, int(round(cfg.topic_share * len(topic_terms))))
                chosen = rng.choice(len(topic_terms), size=take, replace=False)
                for c in chosen.tolist():
                    t = topic_terms[c]
                    vec[t] = float(rng.lognormal(cfg.topic_boost, cfg.doc_weight_sigma))
                    placed.append(t)
            # injected terms may push nnz past hi; drop background terms first
            # to keep the envelope, injected ones only if they alone exceed it
            if len(vec) > hi:
                keep = set(list(dict.fromkeys(placed))[:hi])
                spare = [t for t in vec if t not in keep]
                for t in rng.choice(spare, size=len(vec) - hi, replace=False).tolist():
                    del vec[t]
            passages.append(VectorRecord(passage_id(doc_id, ordinal), _vector(vec, V)))

    queries = [VectorRecord(f"Q{qi:03d}", _vector(t, V)) for qi, t in enumerate(topics)]
    return SyntheticCorpus(cfg, passages, queries, qrels)
