import pytest

from sparsemask.evaluator import QRels
from sparsemask.experiments import SweepSpec, read_sweep_csv, run_sweep
from sparsemask.plotting import plot_term_histograms, render_report
from sparsemask.sparse_core import TopK, TopP
from sparsemask.synthetic import generate


@pytest.fixture(scope="module")
def sweep(tmp_path_factory):
    d = tmp_path_factory.mktemp("sweep")
    c = generate(vocab_size=1500, n_docs=40, n_queries=6, doc_nnz=(20, 60), query_nnz=(3, 10), seed=3)
    masks = [TopP(0.5), TopP(0.9), TopK(15), TopK(30)]
    diag = run_sweep(c.passages, c.queries, QRels(c.qrels), SweepSpec.diagonal(masks), out=d / "diag.csv")
    run_sweep(c.passages, c.queries, QRels(c.qrels), SweepSpec.cross(masks[:2]), out=d / "cross.csv")
    diag.write_term_counts(d / "terms.json")
    return d


def test_report_writes_figures(sweep, tmp_path):
    import json

    rows = read_sweep_csv(sweep / "diag.csv")
    terms = json.loads((sweep / "terms.json").read_text())
    paths = render_report(rows, tmp_path, terms)
    assert {p.name for p in paths} == {"tradeoff.svg", "index_time.svg", "term_counts.svg"}
    for p in paths:
        assert p.read_text().lstrip().startswith("<?xml")


def test_cross_grid(sweep, tmp_path):
    paths = render_report(read_sweep_csv(sweep / "cross.csv"), tmp_path)
    assert "cross_map.svg" in {p.name for p in paths}


def test_svg_is_deterministic(sweep, tmp_path):
    rows = read_sweep_csv(sweep / "diag.csv")
    a = render_report(rows, tmp_path / "a")
    b = render_report(rows, tmp_path / "b")
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()


def test_png_format(sweep, tmp_path):
    paths = render_report(read_sweep_csv(sweep / "diag.csv"), tmp_path, fmt="png")
    assert all(p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n" for p in paths)


def test_histogram_label_selection(sweep, tmp_path):
    import json

    terms = json.loads((sweep / "terms.json").read_text())
    p = plot_term_histograms(terms, tmp_path / "h.svg", ["topk:15"], ["topp:0.5"])
    assert p.exists()
    with pytest.raises(KeyError):
        plot_term_histograms(terms, tmp_path / "x.svg", ["topk:999"], None)


def test_default_histogram_labels_one_per_scheme():
    from sparsemask.plotting import _representatives

    labels = ["topk:96", "topk:128", "topk:64", "topp:0.25", "topp:0.99", "topp:0.5"]
    assert _representatives(labels) == ["topk:96", "topp:0.5"]
