"""JSON pipeline configuration.

Relative paths are resolved against the directory holding the config file.
Precedence, highest first: command-line flags, environment variables
(remote endpoint, model and API key only), the config file, built-in defaults.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from lcr.backend import Backend, RemoteBackend, ScriptedBackend
from lcr.cache import DEFAULT_CACHE_PATH
from lcr.errors import InvalidConfig
from lcr.model import LcrConfig
from lcr.retrieval import Bm25Params

ENV_ENDPOINT = "LCR_ENDPOINT"
ENV_MODEL = "LCR_MODEL"
DEFAULT_API_KEY_ENV = "LCR_API_KEY"


@dataclass
class DatasetConfig:
    corpus: Path | None = None
    queries: Path | None = None
    qrels: Path | None = None
    qrels_format: str = "beir_tsv"


@dataclass
class BackendConfig:
    kind: str = "scripted"
    name: str | None = None
    fixtures: Path | None = None
    endpoint: str | None = None
    model: str | None = None
    api_key: str | None = None
    api_key_env: str = DEFAULT_API_KEY_ENV
    max_in_flight: int = 8
    supports_n: bool = True
    timeout: float = 60.0

    def resolved_name(self) -> str:
        if self.name:
            return self.name
        if self.kind == "remote":
            return os.environ.get(ENV_MODEL) or self.model or "remote"
        return "scripted"


@dataclass
class RetrievalConfig:
    k1: float = 0.9
    b: float = 0.4
    top_k: int = 10

    @property
    def params(self) -> Bm25Params:
        return Bm25Params(self.k1, self.b)


@dataclass
class PipelineConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    lcr: LcrConfig = field(default_factory=LcrConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    confidence_measure: str = "mscp"
    output_dir: Path = Path("lcr_out")
    cache_path: Path = Path(DEFAULT_CACHE_PATH)

    @classmethod
    def from_file(cls, path: str | Path) -> PipelineConfig:
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except ValueError as exc:
            raise InvalidConfig(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(raw, base_dir=path.parent)

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any], base_dir: Path | None = None) -> PipelineConfig:
        base = base_dir or Path.cwd()

        def resolve(p: Any) -> Path | None:
            if p is None:
                return None
            p = Path(p)
            return p if p.is_absolute() else base / p

        known = {"dataset", "backend", "lcr", "retrieval", "confidence_measure", "output_dir", "cache_path"}
        unknown = set(raw) - known
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        try:
            ds = dict(raw.get("dataset", {}))
            for key in ("corpus", "queries", "qrels"):
                ds[key] = resolve(ds.get(key))
            be = dict(raw.get("backend", {}))
            be["fixtures"] = resolve(be.get("fixtures"))
            cfg = cls(
                dataset=DatasetConfig(**ds),
                backend=BackendConfig(**be),
                lcr=LcrConfig(**raw.get("lcr", {})),
                retrieval=RetrievalConfig(**raw.get("retrieval", {})),
                confidence_measure=raw.get("confidence_measure", "mscp"),
                output_dir=resolve(raw.get("output_dir", "lcr_out")),
                cache_path=resolve(raw.get("cache_path", DEFAULT_CACHE_PATH)),
            )
        except TypeError as exc:
            raise InvalidConfig(str(exc)) from exc
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.backend.kind not in ("scripted", "remote"):
            raise InvalidConfig(f"backend.kind must be 'scripted' or 'remote', got {self.backend.kind!r}")
        if self.confidence_measure not in ("mscp", "se"):
            raise InvalidConfig(f"confidence_measure must be 'mscp' or 'se', got {self.confidence_measure!r}")
        if self.dataset.qrels_format not in ("beir_tsv", "trec4col"):
            raise InvalidConfig(f"unknown qrels_format {self.dataset.qrels_format!r}")
        if self.backend.max_in_flight < 1:
            raise InvalidConfig("backend.max_in_flight must be >= 1")

    def with_lcr(self, **changes: Any) -> PipelineConfig:
        changes = {k: v for k, v in changes.items() if v is not None}
        if not changes:
            return self
        return dataclasses.replace(self, lcr=dataclasses.replace(self.lcr, **changes))

    def to_dict(self) -> dict[str, Any]:
        def plain(v: Any) -> Any:
            if isinstance(v, Path):
                return str(v)
            if isinstance(v, dict):
                return {k: plain(x) for k, x in v.items()}
            return v

        d = plain(dataclasses.asdict(self))
        d["backend"].pop("api_key", None)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def make_backend(cfg: BackendConfig) -> Backend:
    if cfg.kind == "scripted":
        if cfg.fixtures is None:
            raise InvalidConfig("scripted backend needs backend.fixtures")
        return ScriptedBackend.from_file(cfg.fixtures, name=cfg.resolved_name())
    endpoint = os.environ.get(ENV_ENDPOINT) or cfg.endpoint
    model = os.environ.get(ENV_MODEL) or cfg.model
    api_key = os.environ.get(cfg.api_key_env) or cfg.api_key
    if not endpoint or not model:
        raise InvalidConfig("remote backend needs backend.endpoint and backend.model")
    return RemoteBackend(
        endpoint,
        model,
        api_key,
        max_in_flight=cfg.max_in_flight,
        supports_n=cfg.supports_n,
        timeout=cfg.timeout,
        name=cfg.name or model,
    )
