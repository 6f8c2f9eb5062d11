"""Semantic clustering of sampled answers and the confidence measures built on it.

Answers are grouped greedily: each answer is compared (bidirectional
entailment) against the representative of every existing cluster in
creation order and joins the first match, otherwise it starts a new cluster.
The representative is the first member of a cluster.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

from lcr.backend import (
    Backend,
    EntailmentLabel,
    SampleBatch,
    build_answer_prompt,
    classify_entailment,
    sample_answers,
)
from lcr.cache import CacheKey, CacheStore
from lcr.model import Document, LcrConfig, Query, SemanticPartition

MEASURES = ("mscp", "se")


def bidirectional_entails(
    backend: Backend,
    query: Query | str,
    a: str,
    b: str,
    cache: CacheStore | None = None,
) -> bool:
    """True iff ``a`` entails ``b`` and ``b`` entails ``a``.

    Identical strings (after trimming) are equivalent without asking the
    backend; the reverse direction is skipped when the forward one fails.
    """
    if a.strip() == b.strip():
        return True
    if classify_entailment(backend, query, a, b, cache) is not EntailmentLabel.ENTAILMENT:
        return False
    return classify_entailment(backend, query, b, a, cache) is EntailmentLabel.ENTAILMENT


def cluster_semantic(
    backend: Backend,
    query: Query | str,
    answers: Sequence[str],
    cache: CacheStore | None = None,
) -> SemanticPartition:
    if not answers:
        raise ValueError("cannot cluster an empty answer list")
    clusters: list[list[int]] = []
    for i, answer in enumerate(answers):
        for members in clusters:
            if bidirectional_entails(backend, query, answer, answers[members[0]], cache):
                members.append(i)
                break
        else:
            clusters.append([i])
    return SemanticPartition(tuple(tuple(c) for c in clusters), len(answers))


def mscp(partition: SemanticPartition) -> float:
    """Share of samples in the largest cluster."""
    return max(partition.sizes) / partition.k


def semantic_entropy(partition: SemanticPartition) -> float:
    """Shannon entropy (nats) of the cluster-size distribution."""
    k = partition.k
    h = -math.fsum((s / k) * math.log(s / k) for s in partition.sizes)
    return h + 0.0


def se_confidence(partition: SemanticPartition) -> float:
    """Entropy mapped onto [0, 1] as ``1 - H / ln k`` so it can stand in for MSCP."""
    if partition.k == 1:
        return 1.0
    return 1.0 - semantic_entropy(partition) / math.log(partition.k)


@dataclass(frozen=True)
class ConfidenceRecord:
    query_id: str
    doc_id: str | None
    backend: str
    answers: SampleBatch
    partition: SemanticPartition
    mscp: float
    sem_entropy: float

    @property
    def k(self) -> int:
        return self.partition.k

    def value(self, measure: str = "mscp") -> float:
        if measure == "mscp":
            return self.mscp
        if measure == "se":
            return se_confidence(self.partition)
        raise ValueError(f"unknown confidence measure {measure!r}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "query_id": self.query_id,
            "doc_id": self.doc_id,
            "backend": self.backend,
            "k": self.k,
            "temperature": self.answers.temperature,
            "prompt": self.answers.prompt,
            "answers": list(self.answers.answers),
            "clusters": [list(c) for c in self.partition.clusters],
            "mscp": self.mscp,
            "sem_entropy": self.sem_entropy,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ConfidenceRecord:
        batch = SampleBatch(data["prompt"], float(data["temperature"]), tuple(data["answers"]))
        partition = SemanticPartition(tuple(tuple(c) for c in data["clusters"]), int(data["k"]))
        return cls(
            query_id=data["query_id"],
            doc_id=data.get("doc_id"),
            backend=data["backend"],
            answers=batch,
            partition=partition,
            mscp=mscp(partition),
            sem_entropy=semantic_entropy(partition),
        )


def confidence_key(backend: str, query_id: str, doc_id: str | None, k: int, temperature: float) -> CacheKey:
    return CacheKey.for_content(backend, "confidence", query_id, doc_id, k, float(temperature))


def confidence_of(
    backend: Backend,
    query: Query,
    document: Document | None,
    config: LcrConfig,
    cache: CacheStore | None = None,
) -> ConfidenceRecord:
    """Sample, cluster and score one query (or query-document pair)."""
    doc_id = document.doc_id if document is not None else None
    key = confidence_key(backend.name, query.query_id, doc_id, config.k_samples, config.temperature)
    prompt = build_answer_prompt(query, document)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None and hit.get("prompt") == prompt:
            return ConfidenceRecord.from_dict(hit)
    batch = sample_answers(backend, prompt, config.k_samples, config.temperature, cache)
    partition = cluster_semantic(backend, query, batch.answers, cache)
    record = ConfidenceRecord(
        query_id=query.query_id,
        doc_id=doc_id,
        backend=backend.name,
        answers=batch,
        partition=partition,
        mscp=mscp(partition),
        sem_entropy=semantic_entropy(partition),
    )
    if cache is not None:
        cache.put(key, record.to_dict())
    return record
