"""NDCG@k, threshold sweeps, and the confidence/relevance calibration curve.

Gains are linear (``rel / log2(i + 1)``). The ideal DCG is taken over every
judged document of the query, not only the retrieved ones. Unjudged
retrieved documents count as grade 0, and a query with no positive
judgment scores 0 but stays in the mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, Union

from lcr.errors import EmptyIntersection, MissingConfidenceCache
from lcr.model import LcrConfig, RelevanceJudgment, ScoredList
from lcr.reranker import Candidate, RerankOutcome, as_fraction, lcr_sort

Qrels = Mapping[str, Mapping[str, int]]
Ranking = Union[Sequence[str], ScoredList, RerankOutcome]

DEFAULT_LT_GRID = tuple(i / 10 for i in range(1, 10))
DEFAULT_UT_GRID = tuple(i / 10 for i in range(2, 11))
DEFAULT_QT_GRID = tuple(i / 10 for i in range(0, 11))
CALIBRATION_BINS = 10


def qrels_by_query(judgments: Iterable[RelevanceJudgment]) -> dict[str, dict[str, int]]:
    out: dict[str, dict[str, int]] = {}
    for j in judgments:
        out.setdefault(j.query_id, {})[j.doc_id] = j.grade
    return out


def dcg_at_k(rels: Sequence[float], k: int) -> float:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return sum(rel / math.log2(i + 1) for i, rel in enumerate(rels[:k], start=1))


def ndcg_at_k(ranked_doc_ids: Sequence[str], judged: Mapping[str, int], k: int) -> float:
    ideal = dcg_at_k(sorted(judged.values(), reverse=True), k)
    if ideal == 0:
        return 0.0
    return dcg_at_k([judged.get(d, 0) for d in ranked_doc_ids], k) / ideal


def _doc_ids(ranking: Ranking) -> list[str]:
    if isinstance(ranking, (ScoredList, RerankOutcome)):
        return ranking.doc_ids
    return list(ranking)


@dataclass(frozen=True)
class EvalReport:
    per_query: dict[str, float]
    mean_ndcg: float
    k: int
    judged_query_count: int
    excluded_queries: tuple[str, ...] = ()


def evaluate_run(run: Mapping[str, Ranking], qrels: Qrels, k: int = 5) -> EvalReport:
    """Mean NDCG@k over queries present in both the run and the qrels."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    judged = sorted(q for q in run if q in qrels)
    if not judged:
        raise EmptyIntersection()
    per_query = {q: ndcg_at_k(_doc_ids(run[q]), qrels[q], k) for q in judged}
    mean = math.fsum(per_query.values()) / len(per_query)
    excluded = tuple(sorted(q for q in run if q not in qrels))
    return EvalReport(per_query, mean, k, len(judged), excluded)


def binarize(grade: int) -> int:
    if grade < 0:
        raise ValueError(f"grade must be >= 0, got {grade}")
    return 1 if grade > 0 else 0


@dataclass(frozen=True)
class CalibrationBin:
    index: int
    lo: float
    hi: float
    relevant_proportion: float
    sample_count: int


def calibration_bin_index(confidence: float) -> int:
    """Bin ``[i/10, (i+1)/10)``; the top bin is closed so 1.0 lands in bin 9."""
    c = as_fraction(confidence)
    if not 0 <= c <= 1:
        raise ValueError(f"confidence {confidence} outside [0, 1]")
    return min(int(c * CALIBRATION_BINS), CALIBRATION_BINS - 1)


def calibration_curve(records: Iterable[tuple[float, int]]) -> list[CalibrationBin]:
    counts = [0] * CALIBRATION_BINS
    relevant = [0] * CALIBRATION_BINS
    for confidence, rel in records:
        i = calibration_bin_index(confidence)
        counts[i] += 1
        relevant[i] += 1 if rel else 0
    return [
        CalibrationBin(
            index=i,
            lo=i / CALIBRATION_BINS,
            hi=(i + 1) / CALIBRATION_BINS,
            relevant_proportion=relevant[i] / counts[i] if counts[i] else 0.0,
            sample_count=counts[i],
        )
        for i in range(CALIBRATION_BINS)
    ]


@dataclass(frozen=True)
class SweepInputs:
    """Everything a threshold sweep needs, with confidences already computed."""

    lists: Mapping[str, ScoredList]
    query_conf: Mapping[str, float]
    doc_conf: Mapping[tuple[str, str], float]
    qrels: Qrels
    k: int = 5

    def check(self, need_query_conf: bool) -> None:
        for qid, scored in self.lists.items():
            if qid not in self.qrels:
                continue
            if need_query_conf and qid not in self.query_conf:
                raise MissingConfidenceCache(f"query {qid}")
            for doc_id in scored.doc_ids:
                if (qid, doc_id) not in self.doc_conf:
                    raise MissingConfidenceCache(f"query {qid} document {doc_id}")

    def rerank_all(self, config: LcrConfig) -> dict[str, RerankOutcome]:
        out = {}
        for qid, scored in self.lists.items():
            candidates = [Candidate(e.doc_id, self.doc_conf.get((qid, e.doc_id)), e.prev_score) for e in scored.entries]
            qconf = self.query_conf.get(qid) if config.query_threshold_enabled else None
            out[qid] = lcr_sort(qconf, candidates, config, qid)
        return out

    def baseline(self) -> float:
        return evaluate_run(self.lists, self.qrels, self.k).mean_ndcg


@dataclass(frozen=True)
class SweepCell:
    t_lower: float
    t_upper: float
    ndcg: float
    ndcg_delta_percent: float


def percent_delta(new: float, base: float) -> float:
    if base == 0:
        return 0.0 if new == 0 else math.inf
    return 100.0 * (new - base) / base


def _judged_only(inputs: SweepInputs) -> SweepInputs:
    lists = {q: s for q, s in inputs.lists.items() if q in inputs.qrels}
    if not lists:
        raise EmptyIntersection()
    return SweepInputs(lists, inputs.query_conf, inputs.doc_conf, inputs.qrels, inputs.k)


def sweep_document_thresholds(
    inputs: SweepInputs,
    lt_grid: Sequence[float] = DEFAULT_LT_GRID,
    ut_grid: Sequence[float] = DEFAULT_UT_GRID,
    t_query: float | None = None,
) -> list[SweepCell]:
    """NDCG change for every valid (LT < UT) pair; ``t_query=None`` disables the gate."""
    inputs = _judged_only(inputs)
    inputs.check(need_query_conf=t_query is not None)
    base = inputs.baseline()
    cells = []
    for lt in lt_grid:
        for ut in ut_grid:
            if not as_fraction(lt) < as_fraction(ut):
                continue
            config = LcrConfig(
                t_query=t_query if t_query is not None else 0.0,
                t_upper=ut,
                t_lower=lt,
                query_threshold_enabled=t_query is not None,
            )
            score = evaluate_run(inputs.rerank_all(config), inputs.qrels, inputs.k).mean_ndcg
            cells.append(SweepCell(lt, ut, score, percent_delta(score, base)))
    return cells


def sweep_query_threshold(
    inputs: SweepInputs,
    qt_grid: Sequence[float] = DEFAULT_QT_GRID,
    t_upper: float = 0.9,
    t_lower: float = 0.4,
) -> list[tuple[float, float]]:
    """Mean NDCG for each query threshold at fixed document thresholds."""
    inputs = _judged_only(inputs)
    inputs.check(need_query_conf=True)
    rows = []
    for qt in qt_grid:
        config = LcrConfig(t_query=qt, t_upper=t_upper, t_lower=t_lower, query_threshold_enabled=True)
        rows.append((qt, evaluate_run(inputs.rerank_all(config), inputs.qrels, inputs.k).mean_ndcg))
    return rows
