import csv

import pytest

from sparsemask.evaluator import QRels
from sparsemask.experiments import (
    DEFAULT_P_GRID,
    SWEEP_FIELDS,
    Pairing,
    SweepSpec,
    default_k,
    k_grid,
    p_grid,
    read_sweep_csv,
    reference_pair,
    run_sweep,
    strip_timing,
)
from sparsemask.sparse_core import TopK, TopP
from sparsemask.synthetic import generate


@pytest.fixture(scope="module")
def corpus():
    return generate(vocab_size=2000, n_docs=60, n_queries=8, doc_nnz=(30, 90), query_nnz=(3, 10), seed=12)


class TestGrids:
    def test_default_k(self):
        assert default_k(35_200) == 352
        assert default_k(12_800) == 128

    def test_k_grid_endpoints_and_default(self):
        ks = k_grid(35_200)
        assert ks[0] == 176 and ks[-1] == 704
        assert 352 in ks
        steps = {b - a for a, b in zip(ks, ks[1:])}
        assert steps == {88}

    def test_p_grid(self):
        assert [m.p for m in p_grid()] == [0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95, 0.99]

    def test_reference_pair(self):
        assert reference_pair(35_200) == (TopK(352), TopP(0.98))


class TestSpec:
    def test_trial_counts(self):
        grid = p_grid()
        assert len(SweepSpec.diagonal(grid).trials()) == 9
        cross = SweepSpec.cross(grid).trials()
        assert len(cross) == 72
        assert all(d != q for d, q in cross)
        assert len(set(cross)) == 72

    @pytest.mark.parametrize("n", [1, 2, 5])
    def test_cross_law(self, n):
        masks = [TopP(p) for p in DEFAULT_P_GRID[:n]]
        assert len(SweepSpec.cross(masks).trials()) == n * (n - 1)

    def test_invalid(self):
        with pytest.raises(ValueError):
            SweepSpec.diagonal([])
        with pytest.raises(ValueError):
            SweepSpec([TopP(0.5)], [TopP(0.6)], Pairing.DIAGONAL)


def test_sweep_rows_and_caching(corpus, tmp_path, monkeypatch):
    import sparsemask.experiments as exp

    builds = []
    real = exp.build_index
    monkeypatch.setattr(exp, "build_index", lambda *a, **k: builds.append(a[1]) or real(*a, **k))
    masks = [TopP(p) for p in (0.3, 0.6, 0.9)]
    out = run_sweep(corpus.passages, corpus.queries, QRels(corpus.qrels), SweepSpec.cross(masks),
                    out=tmp_path / "s.csv", warmup=0)
    assert len(out.results) == 6
    assert len(builds) == 3
    rows = read_sweep_csv(tmp_path / "s.csv")
    assert list(rows[0]) == SWEEP_FIELDS
    for r in rows:
        assert r["error"] == ""
        assert 0 <= float(r["map"]) <= 1
        assert float(r["queries_per_second"]) > 0
        assert r["doc_mask"] != r["query_mask"]


def test_sweep_reproducible_apart_from_timing(corpus, tmp_path):
    spec = SweepSpec.diagonal([TopP(0.5), TopK(20)])
    for name in ("a.csv", "b.csv"):
        run_sweep(corpus.passages, corpus.queries, QRels(corpus.qrels), spec, out=tmp_path / name, seed=7)
    a, b = read_sweep_csv(tmp_path / "a.csv"), read_sweep_csv(tmp_path / "b.csv")
    assert strip_timing(a) == strip_timing(b)
    assert all(r["seed"] == "7" for r in a)


def test_failed_trial_recorded(corpus):
    too_big = TopK(5000)  # exceeds the 2000-term vocabulary
    out = run_sweep(corpus.passages, corpus.queries, QRels(corpus.qrels), SweepSpec.diagonal([too_big, TopP(0.5)]))
    assert "InvalidMaskError" in out.results[0].error
    assert out.results[0].map is None
    assert out.results[1].error == "" and out.results[1].map is not None


def test_queries_without_relevant_docs_skipped(corpus):
    qrels = QRels(corpus.qrels)
    first = corpus.queries[0].id
    qrels[first] = {d: 0 for d in qrels[first]}
    out = run_sweep(corpus.passages, corpus.queries, qrels, SweepSpec.diagonal([TopP(0.5)]))
    assert out.results[0].queries == len(corpus.queries) - 1


def test_parallel_builds_match_sequential(corpus):
    spec = SweepSpec.diagonal([TopP(0.4), TopP(0.8), TopK(15)])
    seq = run_sweep(corpus.passages, corpus.queries, QRels(corpus.qrels), spec)
    par = run_sweep(corpus.passages, corpus.queries, QRels(corpus.qrels), spec, workers=2)
    for a, b in zip(seq.results, par.results):
        assert (a.map, a.postings, a.mean_terms_docs) == (b.map, b.postings, b.mean_terms_docs)


def test_term_count_sidecar(corpus, tmp_path):
    import json

    out = run_sweep(corpus.passages, corpus.queries, QRels(corpus.qrels), SweepSpec.diagonal([TopK(10)]))
    out.write_term_counts(tmp_path / "t.json")
    blob = json.loads((tmp_path / "t.json").read_text())
    assert len(blob["docs"]["topk:10"]["counts"]) == len(corpus.passages)
    assert max(blob["docs"]["topk:10"]["counts"]) <= 10


def test_csv_header_fixed(tmp_path):
    with open(tmp_path / "x.csv", "w", newline="") as f:
        csv.writer(f).writerow(["nope"])
    with pytest.raises(ValueError):
        read_sweep_csv(tmp_path / "x.csv")
