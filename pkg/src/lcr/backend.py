"""Black-box LLM access: answer sampling and entailment classification.

Two backends share one small interface:

* ``sample(prompt, temperature, indices)`` returns one answer per requested
  sample index.
* ``complete(prompt)`` returns a single greedy completion, used for the
  entailment label.

``sample_answers`` and ``classify_entailment`` wrap either backend with the
on-disk cache so repeated runs never re-issue a request.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import httpx

from lcr.cache import CacheKey, CacheStore
from lcr.errors import EmptyQuery, MalformedRecord, RemoteError, ScriptMiss
from lcr.model import Document, Query

logger = logging.getLogger(__name__)

ANSWER_TEMPLATE = "Answer the following question as briefly as possible.\nQuestion: {query}\nAnswer:"
ANSWER_WITH_CONTEXT_TEMPLATE = (
    "Answer the following question as briefly as possible.\n"
    "Context: {document}\n"
    "Question: {query}\n"
    "Answer:"
)
ENTAILMENT_TEMPLATE = (
    'We are evaluating answers to the question "{query}"\n'
    "Possible Answer 1: {answer1}\n"
    "Possible Answer 2: {answer2}\n"
    "Does Possible Answer 1 semantically entail Possible Answer 2? "
    "Respond with only one of the following words: entailment, contradiction, or neutral. "
    "Do not provide any additional explanation.\n"
    "Response:"
)
EMPTY_ANSWER = "EMPTY"


def _query_text(query: Query | str) -> tuple[str, str]:
    if isinstance(query, Query):
        return query.query_id, query.text
    return "", query


def build_answer_prompt(query: Query | str, document: Document | None = None) -> str:
    query_id, text = _query_text(query)
    if not text.strip():
        raise EmptyQuery(query_id)
    if document is None:
        return ANSWER_TEMPLATE.format(query=text)
    return ANSWER_WITH_CONTEXT_TEMPLATE.format(document=document.full_text, query=text)


def normalize_answer(answer: str) -> str:
    return answer.strip() or EMPTY_ANSWER


def build_entailment_prompt(query: Query | str, answer1: str, answer2: str) -> str:
    _, text = _query_text(query)
    return ENTAILMENT_TEMPLATE.format(
        query=text, answer1=normalize_answer(answer1), answer2=normalize_answer(answer2)
    )


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class EntailmentLabel(str, enum.Enum):
    ENTAILMENT = "entailment"
    CONTRADICTION = "contradiction"
    NEUTRAL = "neutral"


_LABEL_RE = re.compile(r"\b(entailment|contradiction|neutral)\b")


def parse_label(text: str, stats: BackendStats | None = None) -> EntailmentLabel:
    """Map a free-text response to a label; the first keyword wins, no keyword means neutral."""
    match = _LABEL_RE.search(text.lower())
    if match is None:
        if stats is not None:
            stats.bump("unparseable_labels")
        return EntailmentLabel.NEUTRAL
    return EntailmentLabel(match.group(1))


class BackendKind(str, enum.Enum):
    REMOTE = "remote"
    SCRIPTED = "scripted"


@dataclass(frozen=True)
class BackendId:
    name: str
    kind: BackendKind

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("backend name must be nonempty")


@dataclass(frozen=True)
class SampleBatch:
    prompt: str
    temperature: float
    answers: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "answers", tuple(self.answers))

    @property
    def k(self) -> int:
        return len(self.answers)


@dataclass
class BackendStats:
    """Counters for requests issued and labels that fell back to neutral."""

    sample_requests: int = 0
    complete_requests: int = 0
    unparseable_labels: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def bump(self, name: str, by: int = 1) -> None:
        with self._lock:
            setattr(self, name, getattr(self, name) + by)


class Backend:
    """Base class; subclasses implement ``sample`` and ``complete``."""

    kind: BackendKind

    def __init__(self, name: str):
        self.id = BackendId(name, self.kind)
        self.stats = BackendStats()

    @property
    def name(self) -> str:
        return self.id.name

    def sample(self, prompt: str, temperature: float, indices: Sequence[int]) -> list[str]:
        raise NotImplementedError

    def complete(self, prompt: str) -> str:
        raise NotImplementedError


class ScriptedBackend(Backend):
    """Deterministic fixture-driven backend.

    Fixtures are keyed either by the literal prompt or by its sha256 hex
    digest. ``answers`` maps a sampling prompt to its ordered answers (sample
    index ``i`` returns ``answers[i]``); ``labels`` maps an entailment prompt
    to the raw response text.
    """

    kind = BackendKind.SCRIPTED

    def __init__(
        self,
        answers: Mapping[str, Sequence[str]] | None = None,
        labels: Mapping[str, str] | None = None,
        name: str = "scripted",
    ):
        super().__init__(name)
        self._answers = {self._norm_key(k): list(v) for k, v in (answers or {}).items()}
        self._labels = {self._norm_key(k): v for k, v in (labels or {}).items()}

    @staticmethod
    def _norm_key(key: str) -> str:
        if re.fullmatch(r"[0-9a-f]{64}", key):
            return key
        return prompt_hash(key)

    @classmethod
    def from_file(cls, path: str | Path, name: str = "scripted") -> ScriptedBackend:
        answers: dict[str, list[str]] = {}
        labels: dict[str, str] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    key = rec["prompt_hash"] if "prompt_hash" in rec else rec["prompt"]
                    role = rec.get("role", "answer")
                    if role == "answer":
                        answers[key] = [str(a) for a in rec["answers"]]
                    elif role == "entailment":
                        labels[key] = str(rec["label"])
                    else:
                        raise ValueError(role)
                except (ValueError, KeyError, TypeError) as exc:
                    raise MalformedRecord(lineno, f"bad fixture ({exc})") from exc
        return cls(answers, labels, name=name)

    def sample(self, prompt: str, temperature: float, indices: Sequence[int]) -> list[str]:
        key = prompt_hash(prompt)
        fixture = self._answers.get(key)
        if fixture is None or (indices and max(indices) >= len(fixture)):
            raise ScriptMiss(key, "answer")
        self.stats.bump("sample_requests")
        return [fixture[i] for i in indices]

    def complete(self, prompt: str) -> str:
        key = prompt_hash(prompt)
        if key not in self._labels:
            raise ScriptMiss(key, "entailment")
        self.stats.bump("complete_requests")
        return self._labels[key]


def parse_chat_completion(body: Mapping[str, Any]) -> list[str]:
    """Extract ``choices[*].message.content`` in choice-index order, trimmed."""
    try:
        choices = list(body["choices"])
        choices.sort(key=lambda c: c.get("index", 0))
        return [str(c["message"]["content"] or "").strip() for c in choices]
    except (KeyError, TypeError, AttributeError) as exc:
        raise RemoteError(None, f"unexpected response shape: {json.dumps(body)[:200]}") from exc


class RemoteBackend(Backend):
    """Chat-completion endpoint client with bounded retries and an in-flight limit.

    ``endpoint`` is the full URL that accepts the POST. Transport errors and
    5xx responses are retried with exponential backoff; 4xx fails at once.
    """

    kind = BackendKind.REMOTE

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        *,
        max_in_flight: int = 8,
        supports_n: bool = True,
        timeout: float = 60.0,
        max_attempts: int = 3,
        backoff_base: float = 1.0,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        name: str | None = None,
    ):
        if not endpoint:
            raise ValueError("remote backend needs an endpoint URL")
        super().__init__(name or model)
        self.endpoint = endpoint
        self.model = model
        self.supports_n = supports_n
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_in_flight)
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def close(self) -> None:
        self._client.close()

    def _post(self, prompt: str, temperature: float, n: int) -> list[str]:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
            "n": n,
        }
        status: int | None = None
        detail = ""
        for attempt in range(self.max_attempts):
            if attempt:
                self._sleep(self.backoff_base * 2 ** (attempt - 1))
            try:
                with self._slots:
                    resp = self._client.post(self.endpoint, json=payload)
            except httpx.TransportError as exc:
                status, detail = None, f"{type(exc).__name__}: {exc}"
                logger.warning("request attempt %d failed: %s", attempt + 1, detail)
                continue
            status, detail = resp.status_code, resp.text
            if resp.status_code >= 500:
                logger.warning("request attempt %d got %d", attempt + 1, resp.status_code)
                continue
            if resp.status_code >= 400:
                raise RemoteError(status, detail)
            try:
                body = resp.json()
            except ValueError as exc:
                raise RemoteError(status, detail) from exc
            return parse_chat_completion(body)
        raise RemoteError(status, detail)

    def sample(self, prompt: str, temperature: float, indices: Sequence[int]) -> list[str]:
        wanted = len(indices)
        out: list[str] = []
        if self.supports_n and wanted > 1:
            self.stats.bump("sample_requests")
            out = self._post(prompt, temperature, wanted)[:wanted]
            if len(out) < wanted:
                logger.warning("endpoint returned %d of %d choices; falling back to single calls", len(out), wanted)
        while len(out) < wanted:
            self.stats.bump("sample_requests")
            got = self._post(prompt, temperature, 1)
            if not got:
                raise RemoteError(None, "response carried no choices")
            out.append(got[0])
        return out

    def complete(self, prompt: str) -> str:
        self.stats.bump("complete_requests")
        got = self._post(prompt, 0.0, 1)
        if not got:
            raise RemoteError(None, "response carried no choices")
        return got[0]


def _answer_key(backend: Backend, prompt: str, temperature: float, index: int) -> CacheKey:
    return CacheKey.for_content(backend.name, "answer", prompt, float(temperature), index)


def sample_answers(
    backend: Backend,
    prompt: str,
    k: int,
    temperature: float,
    cache: CacheStore | None = None,
) -> SampleBatch:
    """Draw ``k`` answers for ``prompt``, serving cached sample indices first.

    Each sample index has its own cache entry, so the one-call (``n=k``) and
    sequential paths populate identical keys.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    answers: list[str | None] = [None] * k
    keys = [_answer_key(backend, prompt, temperature, i) for i in range(k)]
    if cache is not None:
        for i, key in enumerate(keys):
            answers[i] = cache.get(key)
    missing = [i for i, a in enumerate(answers) if a is None]
    if missing:
        fetched = backend.sample(prompt, temperature, missing)
        if len(fetched) != len(missing):
            raise RemoteError(None, f"backend returned {len(fetched)} answers, expected {len(missing)}")
        for i, answer in zip(missing, fetched):
            answers[i] = answer.strip()
            if cache is not None:
                cache.put(keys[i], answers[i])
    return SampleBatch(prompt, temperature, tuple(a for a in answers if a is not None))


def classify_entailment(
    backend: Backend,
    query: Query | str,
    answer1: str,
    answer2: str,
    cache: CacheStore | None = None,
) -> EntailmentLabel:
    """Greedy single-sample NLI label for "answer1 entails answer2"; cached by prompt."""
    prompt = build_entailment_prompt(query, answer1, answer2)
    key = CacheKey.for_content(backend.name, "entailment", prompt, 0.0, 0)
    raw = cache.get(key) if cache is not None else None
    if raw is None:
        raw = backend.complete(prompt)
        if cache is not None:
            cache.put(key, raw)
    return parse_label(raw, backend.stats)


def iter_fixture_lines(
    answers: Mapping[str, Sequence[str]], labels: Mapping[str, str]
) -> Iterable[str]:
    """Serialize scripted fixtures as JSONL lines keyed by prompt hash, sorted for stable output."""
    rows = [{"prompt_hash": prompt_hash(p), "role": "answer", "answers": list(a)} for p, a in answers.items()]
    rows += [{"prompt_hash": prompt_hash(p), "role": "entailment", "label": lab} for p, lab in labels.items()]
    rows.sort(key=lambda r: (r["role"], r["prompt_hash"]))
    for row in rows:
        yield json.dumps(row, ensure_ascii=False)
