"""BM25 first-stage retrieval and TREC run-file ingestion."""

from __future__ import annotations

import bisect
import heapq
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from lcr.errors import DuplicateDoc, EmptyCorpus, MalformedRunLine, NonContiguousRanks
from lcr.model import Document, Query, ScoredEntry, ScoredList, validate_scored_list

INDEX_MAGIC = "LCR-BM25-INDEX"
INDEX_VERSION = 1


def tokenize(text: str) -> list[str]:
    """Lowercase and split on every non-alphanumeric character."""
    tokens: list[str] = []
    current: list[str] = []
    for ch in text.lower():
        if ch.isalnum():
            current.append(ch)
        elif current:
            tokens.append("".join(current))
            current = []
    if current:
        tokens.append("".join(current))
    return tokens


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 0.9
    b: float = 0.4

    def __post_init__(self) -> None:
        if not self.k1 > 0:
            raise ValueError(f"k1 must be > 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError(f"b must be in [0, 1], got {self.b}")


def idf(doc_count: int, df: int) -> float:
    return math.log(1.0 + (doc_count - df + 0.5) / (df + 0.5))


def term_weight(tf: int, dl: int, avgdl: float, term_idf: float, params: Bm25Params) -> float:
    norm = tf + params.k1 * (1.0 - params.b + params.b * dl / avgdl)
    return term_idf * tf * (params.k1 + 1.0) / norm


class InvertedIndex:
    """Immutable term -> [(doc ordinal, tf)] postings with length statistics."""

    def __init__(
        self,
        doc_ids: Sequence[str],
        doc_lengths: Sequence[int],
        postings: dict[str, list[tuple[int, int]]],
    ):
        self.doc_ids = tuple(doc_ids)
        self.doc_lengths = tuple(doc_lengths)
        self.postings = {t: tuple(p) for t, p in postings.items()}
        self.doc_count = len(self.doc_ids)
        self.avgdl = sum(self.doc_lengths) / self.doc_count if self.doc_count else 0.0
        self._ordinal_index = {t: tuple(o for o, _ in p) for t, p in self.postings.items()}

    @property
    def term_count(self) -> int:
        return len(self.postings)

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def tf(self, term: str, ordinal: int) -> int:
        plist = self.postings.get(term)
        if not plist:
            return 0
        ords = self._ordinal_index[term]
        pos = bisect.bisect_left(ords, ordinal)
        if pos < len(ords) and ords[pos] == ordinal:
            return plist[pos][1]
        return 0

    def save(self, path: str | Path) -> None:
        body = {
            "doc_ids": list(self.doc_ids),
            "doc_lengths": list(self.doc_lengths),
            "postings": {t: [list(x) for x in p] for t, p in sorted(self.postings.items())},
        }
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{INDEX_MAGIC} {INDEX_VERSION}\n")
            json.dump(body, fh, ensure_ascii=False, separators=(",", ":"))
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> InvertedIndex:
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().split()
            if len(header) != 2 or header[0] != INDEX_MAGIC:
                raise ValueError(f"{path} is not an lcr BM25 index")
            if int(header[1]) != INDEX_VERSION:
                raise ValueError(f"{path}: unsupported index version {header[1]}")
            body = json.load(fh)
        postings = {t: [(int(o), int(f)) for o, f in p] for t, p in body["postings"].items()}
        return cls(body["doc_ids"], body["doc_lengths"], postings)


def build_index(corpus: Iterable[Document]) -> InvertedIndex:
    doc_ids: list[str] = []
    lengths: list[int] = []
    postings: dict[str, list[tuple[int, int]]] = defaultdict(list)
    seen: set[str] = set()
    for ordinal, doc in enumerate(corpus):
        if doc.doc_id in seen:
            raise DuplicateDoc(doc.doc_id)
        seen.add(doc.doc_id)
        tokens = tokenize(doc.full_text)
        doc_ids.append(doc.doc_id)
        lengths.append(len(tokens))
        for term, count in Counter(tokens).items():
            postings[term].append((ordinal, count))
    if not doc_ids:
        raise EmptyCorpus()
    return InvertedIndex(doc_ids, lengths, dict(postings))


def _distinct(tokens: Iterable[str]) -> list[str]:
    return list(dict.fromkeys(tokens))


def bm25_score(index: InvertedIndex, params: Bm25Params, query_tokens: Sequence[str], ordinal: int) -> float:
    score = 0.0
    dl = index.doc_lengths[ordinal]
    for term in _distinct(query_tokens):
        tf = index.tf(term, ordinal)
        if tf:
            score += term_weight(tf, dl, index.avgdl, idf(index.doc_count, index.df(term)), params)
    return score


def score_all(index: InvertedIndex, params: Bm25Params, query_tokens: Sequence[str]) -> dict[int, float]:
    """Scores for every document sharing at least one term with the query."""
    scores: dict[int, float] = {}
    for term in _distinct(query_tokens):
        plist = index.postings.get(term)
        if not plist:
            continue
        term_idf = idf(index.doc_count, len(plist))
        for ordinal, tf in plist:
            w = term_weight(tf, index.doc_lengths[ordinal], index.avgdl, term_idf, params)
            scores[ordinal] = scores.get(ordinal, 0.0) + w
    return scores


def retrieve_top_k(index: InvertedIndex, params: Bm25Params, query: Query | str, k: int = 10) -> ScoredList:
    """Top-k documents by BM25, ties broken by doc_id ascending; zero scores never returned."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    query_id, text = (query.query_id, query.text) if isinstance(query, Query) else ("", query)
    scores = score_all(index, params, tokenize(text))
    ranked = heapq.nsmallest(
        k,
        ((-s, index.doc_ids[o]) for o, s in scores.items() if s > 0),
    )
    return ScoredList.from_pairs(query_id, ((d, -neg) for neg, d in ranked))


def load_run(path: str | Path) -> dict[str, ScoredList]:
    """Parse a 6-column TREC run file into per-query lists ordered by rank."""
    rows: dict[str, list[tuple[int, str, float]]] = defaultdict(list)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            cols = line.split()
            if len(cols) != 6:
                raise MalformedRunLine(lineno, f"expected 6 columns, got {len(cols)}")
            qid, _q0, doc_id, rank, score, _tag = cols
            try:
                rows[qid].append((int(rank), doc_id, float(score)))
            except ValueError as exc:
                raise MalformedRunLine(lineno, str(exc)) from exc
    run: dict[str, ScoredList] = {}
    for qid, items in rows.items():
        items.sort(key=lambda r: r[0])
        if [r[0] for r in items] != list(range(1, len(items) + 1)):
            raise NonContiguousRanks(qid)
        scored = ScoredList(qid, tuple(ScoredEntry(d, s, r) for r, d, s in items))
        run[qid] = validate_scored_list(scored)
    return run
