"""Exception hierarchy shared by every lcr module."""

from __future__ import annotations


class LcrError(Exception):
    """Base class for all errors raised by lcr."""


class DuplicateDoc(LcrError, ValueError):
    def __init__(self, doc_id: str):
        super().__init__(f"duplicate document id: {doc_id!r}")
        self.doc_id = doc_id


class DuplicateQuery(LcrError, ValueError):
    def __init__(self, query_id: str):
        super().__init__(f"duplicate query id: {query_id!r}")
        self.query_id = query_id


class NonFiniteScore(LcrError, ValueError):
    def __init__(self, doc_id: str):
        super().__init__(f"non-finite score for document {doc_id!r}")
        self.doc_id = doc_id


class RankGap(LcrError, ValueError):
    def __init__(self, position: int):
        super().__init__(f"original_rank sequence broken at position {position}")
        self.position = position


class EmptyQuery(LcrError, ValueError):
    def __init__(self, query_id: str = ""):
        super().__init__(f"query {query_id!r} has empty text")
        self.query_id = query_id


class EmptyCorpus(LcrError, ValueError):
    def __init__(self, source: str = ""):
        super().__init__(f"corpus is empty{': ' + source if source else ''}")


class InvalidThresholds(LcrError, ValueError):
    pass


class InvalidConfig(LcrError, ValueError):
    pass


class MissingDocument(LcrError, KeyError):
    def __init__(self, doc_id: str):
        super().__init__(doc_id)
        self.doc_id = doc_id

    def __str__(self) -> str:
        return f"document {self.doc_id!r} not found in corpus"


class MalformedRecord(LcrError, ValueError):
    def __init__(self, line: int, reason: str = ""):
        super().__init__(f"malformed record at line {line}{': ' + reason if reason else ''}")
        self.line = line


class MalformedRunLine(LcrError, ValueError):
    def __init__(self, line: int, reason: str = ""):
        super().__init__(f"malformed run line {line}{': ' + reason if reason else ''}")
        self.line = line


class NonContiguousRanks(LcrError, ValueError):
    def __init__(self, query_id: str):
        super().__init__(f"ranks for query {query_id!r} are not 1..n")
        self.query_id = query_id


class EmptyIntersection(LcrError, ValueError):
    def __init__(self):
        super().__init__("no query appears in both the run and the qrels")


class MissingConfidenceCache(LcrError):
    def __init__(self, what: str):
        super().__init__(f"no cached confidence for {what}; run `lcr rerank --score-all` first")
        self.what = what


class RemoteError(LcrError):
    def __init__(self, status: int | None, body: str):
        excerpt = body[:200]
        super().__init__(f"remote endpoint failed (status={status}): {excerpt}")
        self.status = status
        self.body = excerpt


class ScriptMiss(LcrError, KeyError):
    def __init__(self, prompt_hash: str, role: str = "answer"):
        super().__init__(prompt_hash)
        self.prompt_hash = prompt_hash
        self.role = role

    def __str__(self) -> str:
        return f"scripted backend has no {self.role} fixture for prompt {self.prompt_hash}"
