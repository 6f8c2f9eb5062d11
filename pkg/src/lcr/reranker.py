"""Confidence binning and the multi-level stable sort with a query-confidence gate."""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Mapping, Sequence

from lcr.backend import Backend
from lcr.cache import CacheStore
from lcr.confidence import ConfidenceRecord, confidence_of
from lcr.errors import InvalidThresholds, MissingDocument
from lcr.model import Document, LcrConfig, Query, ScoredList


class Bin(enum.IntEnum):
    HIGH = 1
    MEDIUM = 0
    LOW = -1


def as_fraction(x: float | int | Fraction) -> Fraction:
    """Exact rational for a confidence or threshold.

    Floats go through their shortest repr, so ``0.6`` and ``3/5`` compare
    equal and a threshold like ``0.4`` is exactly ``2/5``.
    """
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    return Fraction(repr(float(x)))


def binned_confidence_score(c: float, t_upper: float, t_lower: float) -> Bin:
    upper, lower = as_fraction(t_upper), as_fraction(t_lower)
    if not lower < upper:
        raise InvalidThresholds(f"t_lower={t_lower} must be < t_upper={t_upper}")
    value = as_fraction(c)
    if value >= upper:
        return Bin.HIGH
    if value <= lower:
        return Bin.LOW
    return Bin.MEDIUM


@dataclass(frozen=True)
class Candidate:
    doc_id: str
    confidence: float | None
    prev_score: float


@dataclass(frozen=True)
class RankedDoc:
    doc_id: str
    bin: Bin | None
    confidence: float | None
    prev_score: float
    new_rank: int


@dataclass(frozen=True)
class RerankOutcome:
    query_id: str
    gated: bool
    entries: tuple[RankedDoc, ...]
    query_confidence: float | None = None
    records: tuple[ConfidenceRecord, ...] = field(default=(), compare=False, repr=False)

    @property
    def doc_ids(self) -> list[str]:
        return [e.doc_id for e in self.entries]

    @property
    def binned(self) -> bool:
        return not self.gated

    def diagnostics(self) -> list[dict[str, Any]]:
        return [
            {
                "query_id": self.query_id,
                "gated": self.gated,
                "query_confidence": self.query_confidence,
                "doc_id": e.doc_id,
                "bin": None if e.bin is None else int(e.bin),
                "confidence": e.confidence,
                "prev_score": e.prev_score,
                "new_rank": e.new_rank,
            }
            for e in self.entries
        ]


def is_gated(query_conf: float | None, config: LcrConfig) -> bool:
    """Whether the query is confident enough to keep the prior ranking."""
    if not config.query_threshold_enabled:
        return False
    if query_conf is None:
        raise ValueError("query confidence required when the query threshold is enabled")
    return as_fraction(query_conf) >= as_fraction(config.t_query)


def lcr_sort(
    query_conf: float | None,
    entries: Sequence[Candidate],
    config: LcrConfig,
    query_id: str = "",
) -> RerankOutcome:
    """Order candidates by (bin, prev_score) or, when gated, by prev_score alone.

    Both branches are stable: equal keys keep input order.
    """
    if not entries:
        raise ValueError("lcr_sort needs at least one candidate")
    gated = is_gated(query_conf, config)
    if gated:
        bins: list[Bin | None] = [None] * len(entries)
        order = sorted(range(len(entries)), key=lambda i: -entries[i].prev_score)
    else:
        if any(e.confidence is None for e in entries):
            raise ValueError("every candidate needs a confidence when the gate does not fire")
        bins = [binned_confidence_score(e.confidence, config.t_upper, config.t_lower) for e in entries]
        order = sorted(range(len(entries)), key=lambda i: (-bins[i], -entries[i].prev_score))
    ranked = tuple(
        RankedDoc(entries[i].doc_id, bins[i], entries[i].confidence, entries[i].prev_score, rank)
        for rank, i in enumerate(order, start=1)
    )
    return RerankOutcome(query_id, gated, ranked, query_conf)


def rerank_query(
    backend: Backend,
    query: Query,
    scored_list: ScoredList,
    corpus: Mapping[str, Document],
    config: LcrConfig,
    cache: CacheStore | None = None,
    *,
    score_all: bool = False,
    measure: str = "mscp",
    max_workers: int = 1,
) -> RerankOutcome:
    """Score and reorder one query's candidates.

    The query confidence is skipped when the gate is disabled. Document
    confidences are skipped when the gate fires unless ``score_all`` is set
    (the ordering is the same either way; sweeps need the full set).
    """
    documents = []
    for entry in scored_list.entries:
        doc = corpus.get(entry.doc_id)
        if doc is None:
            raise MissingDocument(entry.doc_id)
        documents.append(doc)

    records: list[ConfidenceRecord] = []
    query_conf = None
    if config.query_threshold_enabled or score_all:
        qrec = confidence_of(backend, query, None, config, cache)
        records.append(qrec)
        query_conf = qrec.value(measure)
    gate_conf = query_conf if config.query_threshold_enabled else None

    doc_confs: list[float | None] = [None] * len(documents)
    if score_all or not is_gated(gate_conf, config):
        if max_workers > 1 and len(documents) > 1:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                doc_records = list(pool.map(lambda d: confidence_of(backend, query, d, config, cache), documents))
        else:
            doc_records = [confidence_of(backend, query, d, config, cache) for d in documents]
        records.extend(doc_records)
        doc_confs = [r.value(measure) for r in doc_records]

    candidates = [
        Candidate(e.doc_id, c, e.prev_score) for e, c in zip(scored_list.entries, doc_confs)
    ]
    outcome = lcr_sort(gate_conf, candidates, config, scored_list.query_id)
    return RerankOutcome(outcome.query_id, outcome.gated, outcome.entries, query_conf, tuple(records))
