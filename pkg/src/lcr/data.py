"""Dataset loaders (BEIR JSONL/TSV, TREC qrels) and writers for runs, diagnostics and tables."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from lcr.confidence import ConfidenceRecord
from lcr.errors import DuplicateDoc, DuplicateQuery, EmptyCorpus, MalformedRecord
from lcr.model import Document, Query, RelevanceJudgment, ScoredList
from lcr.reranker import RerankOutcome

logger = logging.getLogger(__name__)

QRELS_FORMATS = ("beir_tsv", "trec4col")


def _iter_jsonl(path: str | Path) -> Iterable[tuple[int, dict[str, Any]]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except ValueError as exc:
                raise MalformedRecord(lineno, "invalid JSON") from exc
            if not isinstance(record, dict):
                raise MalformedRecord(lineno, "record is not an object")
            yield lineno, record


def _field(record: Mapping[str, Any], name: str, lineno: int, required: bool = True) -> str:
    value = record.get(name)
    if value is None:
        if required:
            raise MalformedRecord(lineno, f"missing field {name!r}")
        return ""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = str(value)
    if not isinstance(value, str):
        raise MalformedRecord(lineno, f"field {name!r} is not a string")
    if required and not value.strip():
        raise MalformedRecord(lineno, f"field {name!r} is blank")
    return value


def load_corpus(path: str | Path) -> dict[str, Document]:
    corpus: dict[str, Document] = {}
    for lineno, record in _iter_jsonl(path):
        doc_id = _field(record, "_id", lineno)
        text = _field(record, "text", lineno)
        title = _field(record, "title", lineno, required=False)
        if doc_id in corpus:
            raise DuplicateDoc(doc_id)
        corpus[doc_id] = Document(doc_id, text, title)
    if not corpus:
        raise EmptyCorpus(str(path))
    return corpus


def load_queries(path: str | Path) -> dict[str, Query]:
    queries: dict[str, Query] = {}
    for lineno, record in _iter_jsonl(path):
        query_id = _field(record, "_id", lineno)
        text = _field(record, "text", lineno)
        if query_id in queries:
            raise DuplicateQuery(query_id)
        queries[query_id] = Query(query_id, text)
    return queries


def load_qrels(path: str | Path, format: str = "beir_tsv") -> list[RelevanceJudgment]:
    """Read judgments; a BEIR header row is detected by a non-integer score column."""
    if format not in QRELS_FORMATS:
        raise ValueError(f"unknown qrels format {format!r}; expected one of {QRELS_FORMATS}")
    judgments: list[RelevanceJudgment] = []
    seen: set[tuple[str, str]] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            if format == "beir_tsv":
                cols = line.rstrip("\r\n").split("\t")
                if len(cols) != 3:
                    raise MalformedRecord(lineno, f"expected 3 tab-separated columns, got {len(cols)}")
                qid, doc_id, grade_s = (c.strip() for c in cols)
            else:
                cols = line.split()
                if len(cols) != 4:
                    raise MalformedRecord(lineno, f"expected 4 columns, got {len(cols)}")
                qid, _iteration, doc_id, grade_s = cols
            try:
                grade = int(grade_s)
            except ValueError as exc:
                if format == "beir_tsv" and lineno == 1 and not judgments:
                    continue
                raise MalformedRecord(lineno, f"grade {grade_s!r} is not an integer") from exc
            if grade < 0:
                raise MalformedRecord(lineno, f"negative grade {grade}")
            if (qid, doc_id) in seen:
                raise MalformedRecord(lineno, f"duplicate judgment for ({qid}, {doc_id})")
            seen.add((qid, doc_id))
            judgments.append(RelevanceJudgment(qid, doc_id, grade))
    return judgments


@dataclass(frozen=True)
class DatasetBundle:
    corpus: dict[str, Document]
    queries: dict[str, Query]
    qrels: list[RelevanceJudgment] = field(default_factory=list)


def load_dataset(
    corpus_path: str | Path,
    queries_path: str | Path,
    qrels_path: str | Path | None = None,
    qrels_format: str = "beir_tsv",
) -> DatasetBundle:
    """Load a BEIR-style dataset; judgments for unknown queries are dropped with a warning."""
    corpus = load_corpus(corpus_path)
    queries = load_queries(queries_path)
    kept: list[RelevanceJudgment] = []
    if qrels_path is not None:
        dropped = missing_docs = 0
        for j in load_qrels(qrels_path, qrels_format):
            if j.query_id not in queries:
                dropped += 1
                continue
            if j.doc_id not in corpus:
                missing_docs += 1
            kept.append(j)
        if dropped:
            logger.warning("dropped %d judgments for unknown queries", dropped)
        if missing_docs:
            logger.warning("%d judgments reference documents absent from the corpus", missing_docs)
    return DatasetBundle(corpus, queries, kept)


def _format_run_line(qid: str, doc_id: str, rank: int, score: float, tag: str) -> str:
    return f"{qid} Q0 {doc_id} {rank} {score:.6f} {tag}\n"


def write_run(outcomes: Sequence[RerankOutcome], tag: str, path: str | Path) -> None:
    """Write reranked lists as a TREC run.

    Binned outcomes get a rank-derived score ``n - rank + 1`` (the real sort
    key is (bin, prev_score), which one column cannot carry); gated outcomes
    keep their prev_score.
    """
    if not outcomes:
        raise ValueError("write_run needs at least one outcome")
    lines = []
    for outcome in sorted(outcomes, key=lambda o: o.query_id):
        n = len(outcome.entries)
        for e in sorted(outcome.entries, key=lambda e: e.new_rank):
            score = float(n - e.new_rank + 1) if outcome.binned else e.prev_score
            lines.append(_format_run_line(outcome.query_id, e.doc_id, e.new_rank, score, tag))
    Path(path).write_text("".join(lines), encoding="utf-8")


def write_scored_run(lists: Iterable[ScoredList], tag: str, path: str | Path) -> None:
    lines = []
    for scored in sorted(lists, key=lambda s: s.query_id):
        for e in scored.entries:
            lines.append(_format_run_line(scored.query_id, e.doc_id, e.original_rank, e.prev_score, tag))
    Path(path).write_text("".join(lines), encoding="utf-8")


def write_jsonl(rows: Iterable[Mapping[str, Any]], path: str | Path, header: Mapping[str, Any] | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header is not None:
            fh.write(json.dumps(dict(header), sort_keys=True) + "\n")
        for row in rows:
            fh.write(json.dumps(dict(row), ensure_ascii=False) + "\n")


def write_diagnostics(outcomes: Sequence[RerankOutcome], path: str | Path, config_hash: str | None = None) -> None:
    rows = [row for o in sorted(outcomes, key=lambda o: o.query_id) for row in o.diagnostics()]
    write_jsonl(rows, path, {"config_hash": config_hash} if config_hash else None)


def write_confidences(records: Iterable[ConfidenceRecord], path: str | Path) -> None:
    ordered = sorted(records, key=lambda r: (r.query_id, r.doc_id or ""))
    write_jsonl((r.to_dict() for r in ordered), path)


def read_confidences(path: str | Path) -> list[ConfidenceRecord]:
    return [ConfidenceRecord.from_dict(rec) for _, rec in _iter_jsonl(path)]


def write_table(
    path: str | Path | None,
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
    config_hash: str | None = None,
) -> str:
    """Write a CSV table (optionally preceded by a ``# config_hash=...`` line); returns the text."""
    buf = io.StringIO()
    if config_hash:
        buf.write(f"# config_hash={config_hash}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def _cell(value: Any) -> Any:
    if isinstance(value, float):
        return f"{value:.6f}"
    return value


def read_table(path: str | Path) -> list[dict[str, str]]:
    with open(path, encoding="utf-8") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))
