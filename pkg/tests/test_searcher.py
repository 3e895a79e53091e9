import numpy as np
import pytest

from sparsemask.corpus import VectorRecord
from sparsemask.indexer import build_index
from sparsemask.searcher import (
    ScoredDoc,
    SearchConfig,
    SearchError,
    maxp_aggregate,
    read_run,
    score_passages,
    search,
    write_run,
)
from sparsemask.sparse_core import SparseVector, TopK, TopP
from sparsemask.synthetic import generate

from oracles import brute_force_search, dict_top_p, sort_oracle_top_k


def rec(pid, pairs, vocab=20):
    return VectorRecord(pid, SparseVector.from_mapping(dict(pairs), vocab))


class TestScorePassages:
    def test_disjoint(self):
        idx = build_index([rec("a#0", [(1, 1.0)])], None)
        assert score_passages(idx, SparseVector.from_mapping({2: 5.0}, 20)) == {}

    def test_single_product(self):
        idx = build_index([rec("a#0", [(4, 3.0)])], None)
        assert score_passages(idx, SparseVector.from_mapping({4: 2.0}, 20)) == {0: 600}

    def test_term_out_of_range(self):
        idx = build_index([rec("a#0", [(4, 3.0)])], None)
        with pytest.raises(SearchError):
            score_passages(idx, SparseVector.from_mapping({25: 1.0}, 30))


class TestMaxP:
    TABLE = [("d1", 0), ("d1", 1), ("d1", 2), ("d2", 0), ("d3", 0)]

    def test_max_of_passages(self):
        out = maxp_aggregate({0: 200, 1: 500, 2: 300}, self.TABLE)
        assert out == [ScoredDoc("d1", 500, 1)]

    def test_order_and_ties(self):
        out = maxp_aggregate({4: 10, 3: 10, 0: 7}, self.TABLE)
        assert [(d.doc_id, d.score, d.rank) for d in out] == [("d2", 10, 1), ("d3", 10, 2), ("d1", 7, 3)]

    def test_permutation_invariant(self):
        scores = {0: 5, 1: 9, 3: 9, 4: 1}
        shuffled = dict(reversed(list(scores.items())))
        assert maxp_aggregate(scores, self.TABLE) == maxp_aggregate(shuffled, self.TABLE)

    def test_one_passage_per_doc(self):
        table = [("a", 0), ("b", 0), ("c", 0)]
        out = maxp_aggregate({0: 3, 1: 8, 2: 5}, table)
        assert [d.doc_id for d in out] == ["b", "c", "a"]


def _oracle_mask(mask):
    if isinstance(mask, TopK):
        return lambda d: sort_oracle_top_k(d, mask.k)
    return lambda d: dict_top_p(d, mask.p)


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("mask", [TopK(12), TopP(0.6), TopP(0.95)])
def test_search_matches_brute_force(seed, mask):
    c = generate(vocab_size=500, n_docs=30, n_queries=6, doc_nnz=(10, 60), query_nnz=(2, 12),
                 passages_per_doc=(1, 4), seed=seed)
    idx = build_index(c.passages, mask)
    passages = [(r.id.rpartition("#")[0], r.vector.to_dict()) for r in c.passages]
    for q in c.queries:
        got = [(d.doc_id, d.score) for d in search(idx, q.vector, SearchConfig(mask, depth=1000))]
        want = brute_force_search(passages, q.vector.to_dict(), _oracle_mask(mask), _oracle_mask(mask), 100)
        assert got == want


def test_search_depth_and_rank_contract():
    c = generate(vocab_size=300, n_docs=50, n_queries=4, doc_nnz=(30, 90), query_nnz=(10, 20), seed=1)
    idx = build_index(c.passages, TopP(0.9))
    for q in c.queries:
        full = search(idx, q.vector, SearchConfig(TopP(0.9), 1000))
        top = search(idx, q.vector, SearchConfig(TopP(0.9), 5))
        assert top == full[:5]
        assert [d.rank for d in full] == list(range(1, len(full) + 1))
        scores = [d.score for d in full]
        assert scores == sorted(scores, reverse=True)
        assert len({d.doc_id for d in full}) == len(full)
        for a, b in zip(full, full[1:]):
            if a.score == b.score:
                assert a.doc_id < b.doc_id


def test_search_vocab_mismatch():
    idx = build_index([rec("a#0", [(4, 3.0)])], None)
    with pytest.raises(SearchError):
        search(idx, SparseVector.from_mapping({1: 1.0}, 21))


def test_search_config_depth():
    with pytest.raises(SearchError):
        SearchConfig(None, 0)


class TestRunFiles:
    def test_format(self, tmp_path):
        results = {"q2": [ScoredDoc("b", 900, 1), ScoredDoc("a", 12, 2)], "q1": [ScoredDoc("c", 5, 1)]}
        write_run(results, "tag1", tmp_path / "run.txt")
        lines = (tmp_path / "run.txt").read_text().splitlines()
        assert lines == ["q2 Q0 b 1 900 tag1", "q2 Q0 a 2 12 tag1", "q1 Q0 c 1 5 tag1"]
        assert read_run(tmp_path / "run.txt") == {"q2": ["b", "a"], "q1": ["c"]}

    def test_bad_tag(self, tmp_path):
        with pytest.raises(SearchError):
            write_run({}, "has space", tmp_path / "r")

    def test_read_malformed(self, tmp_path):
        (tmp_path / "r").write_text("q1 Q0 a 1\n")
        with pytest.raises(SearchError):
            read_run(tmp_path / "r")

    def test_read_orders_by_rank(self, tmp_path):
        (tmp_path / "r").write_text("q Q0 b 2 1 t\nq Q0 a 1 2 t\n")
        assert read_run(tmp_path / "r") == {"q": ["a", "b"]}


def test_concurrent_readers_agree():
    from concurrent.futures import ThreadPoolExecutor

    c = generate(vocab_size=400, n_docs=30, n_queries=10, doc_nnz=(20, 60), query_nnz=(3, 9), seed=4)
    idx = build_index(c.passages, TopK(25))
    cfg = SearchConfig(TopK(25), 100)
    serial = [search(idx, q.vector, cfg) for q in c.queries]
    with ThreadPoolExecutor(4) as pool:
        parallel = list(pool.map(lambda q: search(idx, q.vector, cfg), c.queries))
    assert serial == parallel
    assert np.all(idx.refs >= 0)
