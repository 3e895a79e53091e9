"""Matplotlib renderings of sweep CSVs and term-count sidecars.

Figures are written with the Agg backend. SVG output is made reproducible by
pinning the hash salt and dropping the date metadata.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "sparsemask",
    "svg.fonttype": "none",
    "figure.dpi": 100,
}

SERIES = {"topk": ("Top-K", "tab:blue", "s"), "topp": ("Top-P", "tab:orange", "o")}


def _kind(label: str) -> str:
    return label.split(":", 1)[0]


def _value(label: str) -> str:
    return label.split(":", 1)[1] if ":" in label else label


def _by_value(labels):
    return sorted(labels, key=lambda s: (_kind(s), float(_value(s))))


def _representatives(labels):
    """One label per scheme: the middle of its sorted values."""
    groups = {}
    for label in _by_value(labels):
        groups.setdefault(_kind(label), []).append(label)
    return [g[len(g) // 2] for g in groups.values()]


def _ok(rows):
    return [r for r in rows if not r.get("error") and r.get("map")]


def save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {"Date": None} if path.suffix == ".svg" else None
    fig.savefig(path, metadata=meta, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_tradeoff(rows, path, title="mAP vs query throughput") -> Path:
    """mAP against queries/sec for the diagonal trials, one series per scheme."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        diag = [r for r in _ok(rows) if r["doc_mask"] == r["query_mask"]]
        for kind, (name, color, marker) in SERIES.items():
            pts = sorted(
                (float(r["queries_per_second"]), float(r["map"]), _value(r["doc_mask"]))
                for r in diag
                if _kind(r["doc_mask"]) == kind
            )
            if not pts:
                continue
            xs, ys, labels = zip(*pts)
            ax.plot(xs, ys, marker=marker, color=color, label=name, lw=1)
            for x, y, lab in pts:
                ax.annotate(lab, (x, y), textcoords="offset points", xytext=(3, 3), fontsize=6)
        ax.set_xlabel("queries / second")
        ax.set_ylabel("mAP")
        ax.set_title(title)
        if ax.get_legend_handles_labels()[0]:
            ax.legend()
        return save(fig, path)


def plot_term_histograms(term_counts: dict, path, doc_labels=None, query_labels=None, bins=30) -> Path:
    """Distributions of selected terms per document (left) and per query (right).

    Without explicit labels each side shows one mask per scheme.
    """
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
        for ax, side, labels, title in (
            (axes[0], "docs", doc_labels, "terms selected per document"),
            (axes[1], "queries", query_labels, "terms selected per query"),
        ):
            data = term_counts.get(side, {})
            missing = [lab for lab in labels or () if lab not in data]
            if missing:
                raise KeyError(f"no {side} term counts for {', '.join(missing)}")
            shown = labels or _representatives(data)
            pooled = np.concatenate([data[lab]["counts"] for lab in shown] or [[0]])
            # shared edges so every series is binned alike
            edges = np.histogram_bin_edges(pooled, bins=min(bins, int(np.ptp(pooled)) + 1))
            for label in shown:
                counts = np.asarray(data[label]["counts"])
                name, color, _ = SERIES.get(_kind(label), (label, None, None))
                ax.hist(counts, bins=edges, alpha=0.55, color=color,
                        label=f"{name} {_value(label)} (mean {counts.mean():.1f})")
            ax.set_xlabel("non-zero terms")
            ax.set_ylabel("count")
            ax.set_title(title)
            if ax.get_legend_handles_labels()[0]:
                ax.legend()
        return save(fig, path)


def plot_index_time(rows, path) -> Path:
    """Indexing seconds per document mask, Top-K and Top-P side by side."""
    with plt.rc_context(STYLE):
        seen = {}
        for r in _ok(rows):
            if r["indexing_seconds"]:
                seen.setdefault(r["doc_mask"], float(r["indexing_seconds"]))
        labels = _by_value(seen)
        fig, ax = plt.subplots(figsize=(max(4, 0.45 * len(labels) + 1), 3.2))
        colors = [SERIES.get(_kind(s), ("", "gray", ""))[1] for s in labels]
        ax.bar(range(len(labels)), [seen[s] for s in labels], color=colors)
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=60, ha="right")
        ax.set_ylabel("indexing seconds")
        ax.set_title("index build time per mask")
        return save(fig, path)


def plot_cross_grid(rows, path, metric="map") -> Path:
    """Heat map of ``metric`` over (document mask, query mask) for cross sweeps."""
    with plt.rc_context(STYLE):
        ok = _ok(rows)
        docs = sorted({r["doc_mask"] for r in ok}, key=lambda s: float(_value(s)))
        qs = sorted({r["query_mask"] for r in ok}, key=lambda s: float(_value(s)))
        grid = np.full((len(docs), len(qs)), np.nan)
        for r in ok:
            grid[docs.index(r["doc_mask"]), qs.index(r["query_mask"])] = float(r[metric])
        fig, ax = plt.subplots(figsize=(5, 4))
        im = ax.imshow(grid, origin="lower", aspect="auto", cmap="viridis")
        ax.set_xticks(range(len(qs)))
        ax.set_xticklabels([_value(q) for q in qs], rotation=45)
        ax.set_yticks(range(len(docs)))
        ax.set_yticklabels([_value(d) for d in docs])
        ax.set_xlabel("query mask")
        ax.set_ylabel("document mask")
        fig.colorbar(im, ax=ax, label=metric)
        ax.grid(False)
        return save(fig, path)


def render_report(rows, out_dir, term_counts=None, fmt="svg") -> list[Path]:
    """Write every figure that the given rows support; returns the paths."""
    out_dir = Path(out_dir)
    written = []
    ok = _ok(rows)
    if any(r["doc_mask"] == r["query_mask"] for r in ok):
        written.append(plot_tradeoff(rows, out_dir / f"tradeoff.{fmt}"))
    if any(r["doc_mask"] != r["query_mask"] for r in ok):
        written.append(plot_cross_grid(rows, out_dir / f"cross_map.{fmt}"))
    if ok:
        written.append(plot_index_time(rows, out_dir / f"index_time.{fmt}"))
    if term_counts:
        written.append(plot_term_histograms(term_counts, out_dir / f"term_counts.{fmt}"))
    return written
