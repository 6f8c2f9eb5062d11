"""``lcr`` command-line driver: index, retrieve, rerank, eval, sweep, calibrate.

Every subcommand reads one JSON config (``--config``); flags override it.
Outputs land in the configured output directory under fixed names.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from lcr.cache import CacheStore
from lcr.config import PipelineConfig, make_backend
from lcr.confidence import ConfidenceRecord
from lcr.data import (
    load_corpus,
    load_dataset,
    load_qrels,
    load_queries,
    read_confidences,
    write_confidences,
    write_diagnostics,
    write_run,
    write_scored_run,
    write_table,
)
from lcr.errors import LcrError, MissingConfidenceCache
from lcr.evaluation import (
    SweepInputs,
    binarize,
    calibration_curve,
    evaluate_run,
    qrels_by_query,
    sweep_document_thresholds,
    sweep_query_threshold,
)
from lcr.reranker import RerankOutcome, rerank_query
from lcr.retrieval import InvertedIndex, build_index, load_run, retrieve_top_k

logger = logging.getLogger("lcr")

INDEX_NAME = "bm25.index"
RETRIEVE_RUN = "bm25.run"
RERANK_RUN = "lcr.run"
DIAGNOSTICS = "lcr.diagnostics.jsonl"
CONFIDENCES = "confidences.jsonl"


class CommandError(Exception):
    """A user-facing failure reported as ``lcr: error: ...`` with exit status 1."""


def _load_config(args: argparse.Namespace, required: bool = True) -> PipelineConfig | None:
    if args.config is None:
        if required:
            raise CommandError("--config is required for this command")
        return None
    path = Path(args.config)
    if not path.exists():
        raise CommandError(f"config file not found: {path}")
    cfg = PipelineConfig.from_file(path)
    if getattr(args, "output_dir", None):
        cfg.output_dir = Path(args.output_dir)
    if getattr(args, "cache", None):
        cfg.cache_path = Path(args.cache)
    if getattr(args, "measure", None):
        cfg.confidence_measure = args.measure
    cfg = cfg.with_lcr(
        t_query=getattr(args, "t_query", None),
        t_upper=getattr(args, "t_upper", None),
        t_lower=getattr(args, "t_lower", None),
        k_samples=getattr(args, "k_samples", None),
        temperature=getattr(args, "temperature", None),
        query_threshold_enabled=False if getattr(args, "no_query_threshold", False) else None,
    )
    return cfg


def _require(path: Path | None, what: str) -> Path:
    if path is None:
        raise CommandError(f"no {what} path configured")
    if not Path(path).exists():
        raise CommandError(f"{what} not found: {path}")
    return Path(path)


def _out(cfg: PipelineConfig, name: str) -> Path:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    return cfg.output_dir / name


def cmd_index(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    corpus_path = _require(cfg.dataset.corpus, "corpus")
    target = _out(cfg, INDEX_NAME)
    if target.exists() and not args.force:
        raise CommandError(f"index already exists at {target}; pass --force to rebuild")
    corpus = load_corpus(corpus_path)
    index = build_index(corpus.values())
    index.save(target)
    print(f"indexed {index.doc_count} documents ({index.term_count} terms) -> {target}")
    return 0


def cmd_retrieve(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    index_path = _require(cfg.output_dir / INDEX_NAME, "index (run `lcr index` first)")
    queries = load_queries(_require(cfg.dataset.queries, "queries"))
    index = InvertedIndex.load(index_path)
    k = args.k or cfg.retrieval.top_k
    lists = [retrieve_top_k(index, cfg.retrieval.params, q, k) for _, q in sorted(queries.items())]
    target = _out(cfg, RETRIEVE_RUN)
    write_scored_run(lists, "bm25", target)
    empty = sum(1 for s in lists if not s.entries)
    print(f"retrieved top-{k} for {len(lists)} queries ({empty} with no match) -> {target}")
    return 0


def cmd_rerank(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    run_path = _require(Path(args.run) if args.run else cfg.output_dir / RETRIEVE_RUN, "input run")
    bundle = load_dataset(_require(cfg.dataset.corpus, "corpus"), _require(cfg.dataset.queries, "queries"))
    run = load_run(run_path)
    backend = make_backend(cfg.backend)
    cache = CacheStore(cfg.cache_path)
    workers = 1 if args.sequential else cfg.backend.max_in_flight

    outcomes: list[RerankOutcome] = []
    records: list[ConfidenceRecord] = []
    failures: list[tuple[str, str]] = []
    for qid in sorted(run):
        scored = run[qid]
        if not scored.entries:
            continue
        try:
            query = bundle.queries.get(qid)
            if query is None:
                raise LcrError(f"query {qid!r} not in queries file")
            outcome = rerank_query(
                backend,
                query,
                scored,
                bundle.corpus,
                cfg.lcr,
                cache,
                score_all=args.score_all,
                measure=cfg.confidence_measure,
                max_workers=workers,
            )
        except LcrError as exc:
            failures.append((qid, f"{type(exc).__name__}: {exc}"))
            print(f"query {qid}: {type(exc).__name__}: {exc}", file=sys.stderr)
            if args.fail_fast:
                break
            continue
        outcomes.append(outcome)
        records.extend(outcome.records)

    if outcomes:
        digest = cfg.config_hash()
        write_run(outcomes, args.tag, _out(cfg, RERANK_RUN))
        write_diagnostics(outcomes, _out(cfg, DIAGNOSTICS), digest)
        write_confidences(records, _out(cfg, CONFIDENCES))
    gated = sum(o.gated for o in outcomes)
    print(
        f"reranked {len(outcomes)} queries ({gated} kept original order), "
        f"{len(failures)} failed -> {cfg.output_dir / RERANK_RUN}"
    )
    if failures:
        print("failed queries: " + ", ".join(q for q, _ in failures), file=sys.stderr)
        return 1
    return 0


def _qrels_arg(args: argparse.Namespace, cfg: PipelineConfig | None) -> tuple[Path, str]:
    fmt = args.qrels_format or (cfg.dataset.qrels_format if cfg else "beir_tsv")
    if args.qrels:
        return _require(Path(args.qrels), "qrels"), fmt
    return _require(cfg.dataset.qrels if cfg else None, "qrels"), fmt


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _load_config(args, required=False)
    qrels_path, fmt = _qrels_arg(args, cfg)
    run_path = _require(Path(args.run), "run")
    report = evaluate_run(load_run(run_path), qrels_by_query(load_qrels(qrels_path, fmt)), args.k)
    metric = f"ndcg@{report.k}"
    rows = [(q, v) for q, v in sorted(report.per_query.items())] if args.per_query else []
    rows.append(("mean", report.mean_ndcg))
    target = _out(cfg, f"eval.{run_path.stem}.csv") if cfg else None
    text = write_table(target, ["query_id", metric], rows, cfg.config_hash() if cfg else None)
    sys.stdout.write(text)
    if report.excluded_queries:
        print(f"{len(report.excluded_queries)} run queries had no judgments and were excluded", file=sys.stderr)
    return 0


def _records_from_cache(cfg: PipelineConfig) -> list[ConfidenceRecord]:
    if not Path(cfg.cache_path).exists():
        raise MissingConfidenceCache(f"cache file {cfg.cache_path}")
    cache = CacheStore(cfg.cache_path)
    name = cfg.backend.resolved_name()
    out = []
    for _, role, payload in cache.scan(f"{name}|confidence|"):
        rec = ConfidenceRecord.from_dict(payload)
        if rec.k == cfg.lcr.k_samples and rec.answers.temperature == cfg.lcr.temperature:
            out.append(rec)
    if not out:
        raise MissingConfidenceCache(f"backend {name!r} in {cfg.cache_path}")
    return out


def build_sweep_inputs(cfg: PipelineConfig, run_path: Path, k: int) -> SweepInputs:
    records = _records_from_cache(cfg)
    query_conf = {r.query_id: r.value(cfg.confidence_measure) for r in records if r.doc_id is None}
    doc_conf = {(r.query_id, r.doc_id): r.value(cfg.confidence_measure) for r in records if r.doc_id is not None}
    qrels = qrels_by_query(load_qrels(_require(cfg.dataset.qrels, "qrels"), cfg.dataset.qrels_format))
    return SweepInputs(load_run(run_path), query_conf, doc_conf, qrels, k)


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    run_path = _require(Path(args.run) if args.run else cfg.output_dir / RETRIEVE_RUN, "baseline run")
    inputs = build_sweep_inputs(cfg, run_path, args.k)
    digest = cfg.config_hash()
    if args.mode == "doc":
        t_query = cfg.lcr.t_query if args.with_query_threshold else None
        cells = sweep_document_thresholds(inputs, t_query=t_query)
        rows = [(c.t_lower, c.t_upper, c.ndcg, c.ndcg_delta_percent) for c in cells]
        target = _out(cfg, "sweep_doc.csv")
        write_table(target, ["t_lower", "t_upper", f"ndcg@{args.k}", "delta_percent"], rows, digest)
    else:
        base = inputs.baseline()
        curve = sweep_query_threshold(inputs, t_upper=cfg.lcr.t_upper, t_lower=cfg.lcr.t_lower)
        rows = [(qt, v, v - base) for qt, v in curve]
        target = _out(cfg, "sweep_qt.csv")
        write_table(target, ["t_query", f"ndcg@{args.k}", "delta"], rows, digest)
    print(f"wrote {len(rows)} sweep rows -> {target}")
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    cfg = _load_config(args, required=False)
    if args.confidences:
        conf_path = _require(Path(args.confidences), "confidence export")
    else:
        conf_path = _require(cfg.output_dir / CONFIDENCES if cfg else None, "confidence export")
    qrels_path, fmt = _qrels_arg(args, cfg)
    qrels = qrels_by_query(load_qrels(qrels_path, fmt))
    measure = args.measure or (cfg.confidence_measure if cfg else "mscp")
    pairs = [
        (r.value(measure), binarize(qrels.get(r.query_id, {}).get(r.doc_id, 0)))
        for r in read_confidences(conf_path)
        if r.doc_id is not None
    ]
    bins = calibration_curve(pairs)
    rows = [(b.index, b.lo, b.hi, b.relevant_proportion, b.sample_count) for b in bins]
    target = _out(cfg, "calibration.csv") if cfg else None
    text = write_table(
        target, ["bin", "lo", "hi", "relevant_proportion", "count"], rows, cfg.config_hash() if cfg else None
    )
    sys.stdout.write(text)
    return 0


def _add_lcr_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--t-query", type=float)
    p.add_argument("--t-upper", type=float)
    p.add_argument("--t-lower", type=float)
    p.add_argument("--k-samples", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--no-query-threshold", action="store_true", help="always apply binning (the gate never fires)")
    p.add_argument("--measure", choices=["mscp", "se"], help="confidence measure")
    p.add_argument("--cache", help="cache file path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lcr", description="confidence-based reranking toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="pipeline JSON config")
        p.add_argument("--output-dir", help="override output_dir")
        return p

    p = add("index", "build the BM25 index")
    p.add_argument("--force", action="store_true", help="overwrite an existing index")
    p.set_defaults(func=cmd_index)

    p = add("retrieve", "BM25 top-k retrieval to a run file")
    p.add_argument("--k", type=int, help="depth (default: retrieval.top_k, 10)")
    p.set_defaults(func=cmd_retrieve)

    p = add("rerank", "LCR-rerank an input run")
    p.add_argument("--run", help="input run (default: <output_dir>/bm25.run)")
    p.add_argument("--tag", default="lcr")
    p.add_argument("--fail-fast", action="store_true", help="stop at the first failed query")
    p.add_argument("--score-all", action="store_true", help="compute every confidence even for gated queries")
    p.add_argument("--sequential", action="store_true", help="score documents one at a time")
    _add_lcr_overrides(p)
    p.set_defaults(func=cmd_rerank)

    p = add("eval", "NDCG@k of a run")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels")
    p.add_argument("--qrels-format", choices=["beir_tsv", "trec4col"])
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--per-query", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = add("sweep", "threshold sweeps from cached confidences")
    p.add_argument("--mode", choices=["qt", "doc"], required=True)
    p.add_argument("--run", help="baseline run (default: <output_dir>/bm25.run)")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--with-query-threshold", action="store_true", help="doc mode: keep the gate at lcr.t_query")
    _add_lcr_overrides(p)
    p.set_defaults(func=cmd_sweep)

    p = add("calibrate", "confidence/relevance calibration table")
    p.add_argument("--confidences", help="confidence export (default: <output_dir>/confidences.jsonl)")
    p.add_argument("--qrels")
    p.add_argument("--qrels-format", choices=["beir_tsv", "trec4col"])
    p.add_argument("--measure", choices=["mscp", "se"])
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"lcr: error: {exc}", file=sys.stderr)
        return 1
    except (LcrError, OSError) as exc:
        print(f"lcr: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
