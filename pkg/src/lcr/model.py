"""Domain records shared across retrieval, confidence scoring, reranking and evaluation.

All records are frozen dataclasses; collections inside them are tuples so an
instance can be handed to worker threads without copying.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from lcr.errors import DuplicateDoc, InvalidConfig, InvalidThresholds, NonFiniteScore, RankGap


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    title: str = ""

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise ValueError("doc_id must be nonempty")
        if not self.text.strip():
            raise ValueError(f"document {self.doc_id!r} has empty text")

    @property
    def full_text(self) -> str:
        """Title and body joined by a single space (title omitted when empty)."""
        return f"{self.title} {self.text}" if self.title else self.text


@dataclass(frozen=True)
class Query:
    query_id: str
    text: str

    def __post_init__(self) -> None:
        if not self.query_id:
            raise ValueError("query_id must be nonempty")


@dataclass(frozen=True)
class RelevanceJudgment:
    query_id: str
    doc_id: str
    grade: int

    def __post_init__(self) -> None:
        if self.grade < 0:
            raise ValueError(f"negative grade for ({self.query_id}, {self.doc_id})")


@dataclass(frozen=True)
class ScoredEntry:
    doc_id: str
    prev_score: float
    original_rank: int


@dataclass(frozen=True)
class ScoredList:
    """One query's candidate list, in original rank order."""

    query_id: str
    entries: tuple[ScoredEntry, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))

    @classmethod
    def from_pairs(cls, query_id: str, pairs: Iterable[tuple[str, float]]) -> ScoredList:
        """Build a list from (doc_id, score) pairs already in rank order."""
        return cls(
            query_id,
            tuple(ScoredEntry(d, float(s), i) for i, (d, s) in enumerate(pairs, start=1)),
        )

    @property
    def doc_ids(self) -> list[str]:
        return [e.doc_id for e in self.entries]

    def to_dict(self) -> dict[str, Any]:
        return {
            "query_id": self.query_id,
            "entries": [[e.doc_id, e.prev_score, e.original_rank] for e in self.entries],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ScoredList:
        return cls(
            data["query_id"],
            tuple(ScoredEntry(d, float(s), int(r)) for d, s, r in data["entries"]),
        )


def validate_scored_list(scored: ScoredList) -> ScoredList:
    """Check a ScoredList's invariants and return it unchanged.

    Raises:
        DuplicateDoc: a doc_id appears twice.
        NonFiniteScore: a prev_score is NaN or infinite.
        RankGap: original ranks are not exactly 1..n in order.
    """
    seen: set[str] = set()
    for position, entry in enumerate(scored.entries, start=1):
        if entry.doc_id in seen:
            raise DuplicateDoc(entry.doc_id)
        seen.add(entry.doc_id)
        if not math.isfinite(entry.prev_score):
            raise NonFiniteScore(entry.doc_id)
        if entry.original_rank != position:
            raise RankGap(position)
    return scored


@dataclass(frozen=True)
class LcrConfig:
    """Thresholds and sampling settings for one reranking run."""

    t_query: float = 0.7
    t_upper: float = 0.9
    t_lower: float = 0.4
    k_samples: int = 10
    temperature: float = 1.0
    query_threshold_enabled: bool = True

    def __post_init__(self) -> None:
        for name in ("t_query", "t_upper", "t_lower"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidThresholds(f"{name}={value} outside [0, 1]")
        if not self.t_lower < self.t_upper:
            raise InvalidThresholds(f"t_lower={self.t_lower} must be < t_upper={self.t_upper}")
        if self.k_samples < 1:
            raise InvalidConfig(f"k_samples must be >= 1, got {self.k_samples}")
        if not self.temperature > 0:
            raise InvalidConfig(f"temperature must be > 0, got {self.temperature}")


@dataclass(frozen=True)
class SemanticPartition:
    """Decomposition of k sampled answers (by index) into semantic clusters.

    Clusters are kept in creation order; members within a cluster in
    insertion order, so ``clusters[m][0]`` is the cluster representative.
    """

    clusters: tuple[tuple[int, ...], ...]
    k: int
    _sizes: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        clusters = tuple(tuple(c) for c in self.clusters)
        object.__setattr__(self, "clusters", clusters)
        if self.k < 1:
            raise ValueError("partition needs k >= 1")
        if any(not c for c in clusters):
            raise ValueError("empty cluster in partition")
        members = [i for c in clusters for i in c]
        if sorted(members) != list(range(self.k)):
            raise ValueError(f"clusters {clusters} do not partition range({self.k})")
        object.__setattr__(self, "_sizes", tuple(len(c) for c in clusters))

    @property
    def sizes(self) -> tuple[int, ...]:
        return self._sizes

    @property
    def num_clusters(self) -> int:
        return len(self.clusters)

    def as_sets(self) -> frozenset[frozenset[int]]:
        return frozenset(frozenset(c) for c in self.clusters)

    @classmethod
    def from_sizes(cls, sizes: Iterable[int]) -> SemanticPartition:
        """Consecutive-index partition with the given cluster sizes."""
        clusters = []
        start = 0
        for size in sizes:
            clusters.append(tuple(range(start, start + size)))
            start += size
        return cls(tuple(clusters), start)
