"""Append-only JSONL store for sampled answers, entailment labels and confidence records.

Each line is ``{"key": ..., "role": ..., "payload": ...}``. The last record
written for a key wins on reload. A torn final line (no trailing newline,
unparseable) is truncated away on open; corrupt lines elsewhere are skipped.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator

logger = logging.getLogger(__name__)

DEFAULT_CACHE_PATH = "lcr_cache.jsonl"
ROLES = ("answer", "entailment", "confidence")


def content_digest(*parts: Any) -> str:
    """64-hex sha256 over a canonical JSON encoding of ``parts``."""
    blob = json.dumps(list(parts), ensure_ascii=False, separators=(",", ":"), sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CacheKey:
    backend: str
    role: str
    digest: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown cache role {self.role!r}")
        if len(self.digest) != 64:
            raise ValueError("digest must be 64 hex characters")

    @classmethod
    def for_content(cls, backend: str, role: str, *parts: Any) -> CacheKey:
        return cls(backend, role, content_digest(*parts))

    def __str__(self) -> str:
        return f"{self.backend}|{self.role}|{self.digest}"


class CacheStore:
    """Thread-safe key/value cache persisted as append-only JSONL.

    Pass ``path=None`` for a purely in-memory store.
    """

    def __init__(self, path: str | os.PathLike[str] | None = DEFAULT_CACHE_PATH):
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._data: dict[str, tuple[str, Any]] = {}
        self.corrupt_lines = 0
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        assert self.path is not None
        raw = self.path.read_bytes()
        lines = raw.split(b"\n")
        torn = lines[-1] if lines else b""
        body = lines[:-1]
        for lineno, line in enumerate(body, start=1):
            if not line.strip():
                continue
            if not self._ingest(line):
                self.corrupt_lines += 1
                logger.warning("cache %s: skipping corrupt record at line %d", self.path, lineno)
        if torn.strip():
            if self._ingest(torn):
                with self.path.open("ab") as fh:
                    fh.write(b"\n")
            else:
                self.corrupt_lines += 1
                logger.warning("cache %s: dropping torn final line", self.path)
                with self.path.open("r+b") as fh:
                    fh.truncate(len(raw) - len(torn))

    def _ingest(self, line: bytes) -> bool:
        try:
            record = json.loads(line)
            key, role, payload = record["key"], record["role"], record["payload"]
        except (ValueError, KeyError, TypeError):
            return False
        self._data[key] = (role, payload)
        return True

    def get(self, key: CacheKey | str) -> Any | None:
        with self._lock:
            hit = self._data.get(str(key))
        return None if hit is None else hit[1]

    def __contains__(self, key: CacheKey | str) -> bool:
        with self._lock:
            return str(key) in self._data

    def put(self, key: CacheKey | str, payload: Any, role: str | None = None) -> None:
        skey = str(key)
        role = role or (key.role if isinstance(key, CacheKey) else "answer")
        line = json.dumps({"key": skey, "role": role, "payload": payload}, ensure_ascii=False)
        with self._lock:
            self._data[skey] = (role, payload)
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(line + "\n")

    def scan(self, prefix: str = "") -> Iterator[tuple[str, str, Any]]:
        """Yield (key, role, payload) for every key starting with ``prefix``, sorted by key."""
        with self._lock:
            items = sorted((k, v) for k, v in self._data.items() if k.startswith(prefix))
        for key, (role, payload) in items:
            yield key, role, payload

    def __len__(self) -> int:
        with self._lock:
            return len(self._data)
