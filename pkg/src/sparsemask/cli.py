"""``sparsemask`` command line.

Exit status: 0 success, 1 usage error, 2 data error, 3 internal error.
Log level comes from ``SPARSEMASK_LOG`` (default ``WARNING``).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import corpus, experiments, plotting, synthetic
from .corpus import VectorRecord
from .evaluator import EvalReport, measure_throughput, per_query_ap, read_qrels, term_count_distribution
from .indexer import DEFAULT_SCALE, STATS_HEADER, build_index, build_stats_row, load_index, save_index
from .searcher import DEFAULT_DEPTH, SearchConfig, search, read_run, write_run
from .sparse_core import parse_mask
from .toy_encoder import HeadParams, encode_unmasked

log = logging.getLogger("sparsemask")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _mask_arg(text):
    try:
        return parse_mask(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _mask_list(text):
    return [_mask_arg(t) for t in text.split(",") if t.strip()]


def _int_range(text):
    lo, _, hi = text.partition(",")
    try:
        return int(lo), int(hi or lo)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI integers, got {text!r}") from None


def _encoder_args(p):
    p.add_argument("--hidden-dim", type=int, default=16)
    p.add_argument("--seed", type=int, default=0, help="encoder seed")
    p.add_argument("--vocab-bias-mean", type=float, default=-2.0)


def _head(args) -> HeadParams:
    return HeadParams.generate(args.seed, args.hidden_dim, args.vocab_size, args.vocab_bias_mean)


def cmd_synth(args):
    cfg = synthetic.SyntheticConfig(
        vocab_size=args.vocab_size,
        n_docs=args.docs,
        n_queries=args.queries,
        passages_per_doc=args.passages,
        seed=args.seed,
    )
    paths = synthetic.generate(cfg).write(args.out_dir)
    for name, path in paths.items():
        print(f"{name}\t{path}")


def cmd_split(args):
    passages = (
        p
        for doc in corpus.read_documents(args.docs)
        for p in corpus.split_passages(doc, args.vocab_size, args.max_tokens)
    )
    corpus.write_passages(passages, corpus.ensure_parent(args.out))


def cmd_encode(args):
    params = _head(args)
    mask = args.mask
    if args.topics:
        units = [(qid, corpus.tokenize(title, args.vocab_size)) for qid, title in corpus.read_topics(args.topics)]
    elif args.passages:
        units = ((p.id, list(p.tokens)) for p in corpus.read_passages(args.passages))
    else:
        units = (
            (p.id, list(p.tokens))
            for doc in corpus.read_documents(args.docs)
            for p in corpus.split_passages(doc, args.vocab_size, args.max_tokens)
        )

    def records():
        for rid, tokens in units:
            if not tokens:
                log.warning("skipping %s: no tokens", rid)
                continue
            v = encode_unmasked(tokens, params)
            yield VectorRecord(rid, mask.apply(v) if mask else v)

    start = time.perf_counter()
    n = corpus.write_vectors(records(), corpus.ensure_parent(args.out))
    log.info("encoded %d records in %.3fs", n, time.perf_counter() - start)


def cmd_index(args):
    records = corpus.read_vectors(args.vectors, args.vocab_size)
    index = build_index(records, args.mask, args.scale, args.vocab_size)
    save_index(index, corpus.ensure_parent(args.out))
    row = build_stats_row(index)
    if args.stats:
        path = Path(args.stats)
        fresh = not path.exists() or path.stat().st_size == 0
        with open(corpus.ensure_parent(path), "a", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            if fresh:
                w.writerow(STATS_HEADER)
            w.writerow(row)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(STATS_HEADER)
    w.writerow(row)


def _load_queries(args, vocab_size):
    if args.queries:
        return [(r.id, r.vector) for r in corpus.read_vectors(args.queries, vocab_size)]
    params = HeadParams.generate(args.seed, args.hidden_dim, vocab_size, args.vocab_bias_mean)
    start = time.perf_counter()
    out = []
    for qid, title in corpus.read_topics(args.topics):
        tokens = corpus.tokenize(title, vocab_size)
        if tokens:
            out.append((qid, encode_unmasked(tokens, params)))
    log.info("query encoding: %d queries in %.4fs", len(out), time.perf_counter() - start)
    return out


def cmd_search(args):
    index = load_index(args.index)
    queries = _load_queries(args, index.vocab_size)
    cfg = SearchConfig(args.mask, args.depth)
    start = time.perf_counter()
    results = {qid: search(index, v, cfg) for qid, v in queries}
    elapsed = time.perf_counter() - start
    log.info("retrieval: %d queries in %.4fs", len(results), elapsed)
    write_run(results, args.tag, corpus.ensure_parent(args.out))


def cmd_evaluate(args):
    run = read_run(args.run)
    qrels = read_qrels(args.qrels)
    usable = qrels.filtered()
    run = {q: r for q, r in run.items() if q in usable}
    # queries with judgments but an empty result list still count, at AP 0
    for q in usable:
        run.setdefault(q, [])
    aps = per_query_ap(run, qrels)
    report = EvalReport(sum(aps.values()) / len(aps), aps)
    if args.index:
        if not args.queries:
            raise UsageError("--index requires --queries for throughput")
        index = load_index(args.index)
        vectors = [r.vector for r in corpus.read_vectors(args.queries, index.vocab_size) if r.id in usable]
        cfg = SearchConfig(args.mask, args.depth)
        tp = measure_throughput(index, vectors, cfg, args.warmup)
        stats = term_count_distribution(cfg.mask.apply(v) if cfg.mask else v for v in vectors)
        report.queries_per_second = tp.queries_per_second
        report.qps_lower_bound = tp.lower_bound
        report.mean_terms_selected = stats.mean
        report.term_count_histogram = stats.histogram
    text = report.to_csv()
    if args.out:
        Path(corpus.ensure_parent(args.out)).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    if args.json:
        Path(corpus.ensure_parent(args.json)).write_text(report.to_json(), encoding="utf-8")


def _sweep_spec(args, vocab_size):
    if args.doc_masks or args.query_masks:
        docs = args.doc_masks or args.query_masks
        queries = args.query_masks or docs
        pairing = experiments.Pairing(args.pairing)
        if pairing is experiments.Pairing.DIAGONAL and docs != queries:
            raise UsageError("diagonal pairing needs identical --doc-masks and --query-masks")
        return experiments.SweepSpec(docs, queries, pairing)
    if args.grid == "reference":
        masks = list(experiments.reference_pair(vocab_size))
    else:
        masks = []
        if args.grid in ("p", "both"):
            masks += experiments.p_grid()
        if args.grid in ("k", "both"):
            masks += [experiments.TopK(k) for k in experiments.k_grid(vocab_size)]
    if args.pairing == "cross":
        return experiments.SweepSpec.cross(masks)
    return experiments.SweepSpec.diagonal(masks)


def cmd_sweep(args):
    docs = list(corpus.read_vectors(args.docs, args.vocab_size))
    queries = list(corpus.read_vectors(args.queries, args.vocab_size))
    qrels = read_qrels(args.qrels)
    spec = _sweep_spec(args, args.vocab_size)
    out = corpus.ensure_parent(args.out)
    outcome = experiments.run_sweep(
        docs,
        queries,
        qrels,
        spec,
        out=out,
        scale=args.scale,
        depth=args.depth,
        seed=args.seed,
        warmup=args.warmup,
        index_repeats=args.index_repeats,
        workers=args.workers,
    )
    terms = Path(args.terms) if args.terms else out.with_suffix(".terms.json")
    outcome.write_term_counts(terms)
    failed = sum(1 for r in outcome.results if r.error)
    print(f"{len(outcome.results)} trials -> {out} ({failed} failed)")
    if args.plots_dir:
        rows = experiments.read_sweep_csv(out)
        blob = json.loads(terms.read_text(encoding="utf-8"))
        for path in plotting.render_report(rows, args.plots_dir, blob, args.format):
            print(f"figure\t{path}")


def cmd_plot(args):
    rows = experiments.read_sweep_csv(args.sweep)
    blob = None
    terms = Path(args.terms) if args.terms else Path(args.sweep).with_suffix(".terms.json")
    if terms.exists():
        blob = json.loads(terms.read_text(encoding="utf-8"))
    elif args.terms:
        raise FileNotFoundError(f"term-count file {terms} not found")
    if blob and args.labels:
        labels = [m.label for m in args.labels]
        path = plotting.plot_term_histograms(blob, Path(args.out_dir) / f"term_counts.{args.format}",
                                             labels, labels)
        print(f"figure\t{path}")
        blob = None
    for path in plotting.render_report(rows, args.out_dir, blob, args.format):
        print(f"figure\t{path}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparsemask", description=__doc__.splitlines()[0].strip("`"))
    parser.add_argument("--config", help="JSON file of option defaults for the chosen subcommand")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    parser.subcommands = sub

    p = sub.add_parser("synth", help="write a seeded synthetic vector corpus with qrels")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--vocab-size", type=int, default=12_800)
    p.add_argument("--docs", type=int, default=1000)
    p.add_argument("--queries", type=int, default=50)
    p.add_argument("--passages", type=_int_range, default=(1, 3), help="LO,HI passages per document")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="tokenize documents and cut them into passages")
    p.add_argument("--docs", required=True, help="JSONL {doc_id,text} or TSV doc_id<TAB>text")
    p.add_argument("--vocab-size", type=int, required=True)
    p.add_argument("--max-tokens", type=int, default=corpus.MAX_PASSAGE_TOKENS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("encode", help="toy SparTerm encoding of passages or topics")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--docs")
    src.add_argument("--passages")
    src.add_argument("--topics", help="query_id<TAB>title per line")
    p.add_argument("--vocab-size", type=int, required=True)
    p.add_argument("--max-tokens", type=int, default=corpus.MAX_PASSAGE_TOKENS)
    p.add_argument("--mask", type=_mask_arg, help="optional mask baked into the output")
    p.add_argument("--out", required=True)
    _encoder_args(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("index", help="mask, quantize and invert a vector file")
    p.add_argument("--vectors", required=True)
    p.add_argument("--vocab-size", type=int, required=True)
    p.add_argument("--mask", type=_mask_arg, required=True, help="topk:K or topp:P")
    p.add_argument("--scale", type=int, default=DEFAULT_SCALE)
    p.add_argument("--stats", help="append one CSV row of build statistics here")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("search", help="retrieve with MaxP and write a TREC run")
    p.add_argument("--index", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--queries", help="query vector file")
    src.add_argument("--topics", help="topics TSV, encoded with the toy encoder")
    p.add_argument("--mask", type=_mask_arg, help="query-side mask")
    p.add_argument("--depth", type=int, default=DEFAULT_DEPTH)
    p.add_argument("--tag", default="sparsemask")
    p.add_argument("--out", required=True)
    _encoder_args(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("evaluate", help="mAP of a run, optionally with throughput")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--index")
    p.add_argument("--queries")
    p.add_argument("--mask", type=_mask_arg)
    p.add_argument("--depth", type=int, default=DEFAULT_DEPTH)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--out", help="CSV report path")
    p.add_argument("--json", help="JSON detail path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="run a document/query mask grid")
    p.add_argument("--docs", required=True, help="passage vector file")
    p.add_argument("--queries", required=True, help="query vector file")
    p.add_argument("--qrels", required=True)
    p.add_argument("--vocab-size", type=int, required=True)
    p.add_argument("--grid", choices=["p", "k", "both", "reference"], default="p")
    p.add_argument("--pairing", choices=[x.value for x in experiments.Pairing], default="diagonal")
    p.add_argument("--doc-masks", type=_mask_list, help="comma list overriding --grid")
    p.add_argument("--query-masks", type=_mask_list)
    p.add_argument("--scale", type=int, default=DEFAULT_SCALE)
    p.add_argument("--depth", type=int, default=DEFAULT_DEPTH)
    p.add_argument("--seed", type=int, default=0, help="recorded in every row")
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--index-repeats", type=int, default=1, help="report the fastest of N builds")
    p.add_argument("--workers", type=int, default=1, help="parallel index builds")
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--terms", help="term-count JSON (default: next to --out)")
    p.add_argument("--plots-dir", help="also render figures here")
    p.add_argument("--format", choices=["svg", "png", "pdf"], default="svg")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="render figures from a sweep CSV")
    p.add_argument("--sweep", required=True)
    p.add_argument("--terms")
    p.add_argument("--labels", type=_mask_list, help="masks to show in the term histograms")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--format", choices=["svg", "png", "pdf"], default="svg")
    p.set_defaults(func=cmd_plot)
    return parser


def _apply_config(parser, argv):
    """Parse ``argv``; a ``--config`` JSON object supplies subcommand defaults."""
    argv = sys.argv[1:] if argv is None else list(argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return parser.parse_args(argv)
    try:
        conf = json.loads(Path(known.config).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        parser.error(f"cannot read config {known.config}: {exc}")
    if not isinstance(conf, dict):
        parser.error("config file must hold a JSON object")
    choices = parser.subcommands.choices
    cmd = next((a for a in argv if a in choices), None)
    if cmd is None:
        return parser.parse_args(argv)
    sub = choices[cmd]
    actions = {a.dest: a for a in sub._actions}
    unknown = set(conf) - set(actions)
    if unknown:
        parser.error(f"unknown config keys for {cmd}: {', '.join(sorted(unknown))}")
    for key, value in conf.items():
        action = actions[key]
        try:
            if action.type is _mask_list and isinstance(value, list):
                value = [_mask_arg(m) for m in value]
            elif action.type is _int_range and isinstance(value, list):
                value = tuple(int(v) for v in value)
            elif action.type is not None and isinstance(value, str):
                value = action.type(value)
        except (argparse.ArgumentTypeError, ValueError) as exc:
            parser.error(f"config key {key}: {exc}")
        conf[key] = value
        action.required = False
    # explicit flags still override config values
    sub.set_defaults(**conf)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("SPARSEMASK_LOG", "WARNING").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = _apply_config(parser, argv)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"sparsemask: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError, KeyError) as exc:
        print(f"sparsemask: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - last resort
        log.exception("internal error")
        print(f"sparsemask: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
