"""Generator for the bundled 50-document / 10-query desk dataset.

Each query asks who founded a fictional town. Per query there are two
relevant documents (grades 2 and 1) and three lexical distractors stuffed
with query terms so BM25 ranks them above the relevant ones. The scripted
answers make the LLM consistent only when it is shown a relevant document,
so confidence tracks relevance and LCR can lift the relevant documents.

Run ``python -m lcr.synthetic OUT_DIR`` to regenerate the files shipped in
``lcr/fixtures/desk``.
"""

from __future__ import annotations

import json
import random
import sys
from pathlib import Path

from lcr.backend import ScriptedBackend, build_answer_prompt, build_entailment_prompt, iter_fixture_lines
from lcr.cache import CacheStore
from lcr.confidence import cluster_semantic
from lcr.model import Document, Query
from lcr.retrieval import Bm25Params, build_index, retrieve_top_k

DESK_DIR = Path(__file__).parent / "fixtures" / "desk"
SEED = 20250120
K = 10

TOWNS = ["Velmora", "Quarrin", "Ostbrook", "Kaldera", "Mirewick", "Tessaly", "Drovany", "Helmsreach", "Zunport", "Caravel"]
FOUNDERS = ["Anselm Rook", "Bettina Sorr", "Corvin Dale", "Dagny Holt", "Emeric Vane", "Fenna Loy", "Gareth Umber", "Hesper Quill", "Ilse Marrow", "Jory Pike"]
DECOYS = ["Lucan Ferris", "Mara Tove", "Nils Aubry", "Odile Crane", "Pell Varga", "Quinta Reyes", "Rolf Idris"]
# Queries whose closed-book answers are already consistent; the query gate keeps their order.
CONFIDENT_QUERIES = {3, 7}


def _variants(name: str) -> list[str]:
    return [name, f"{name}.", f"It was {name}.", f"{name} founded it"]


def _consistent(rng: random.Random, name: str, n: int) -> list[str]:
    forms = _variants(name)
    return [rng.choice(forms) for _ in range(n)]


def _dispersed(rng: random.Random, founder: str, majority: int) -> list[str]:
    """K answers whose largest meaning cluster has exactly ``majority`` members."""
    decoys = rng.sample(DECOYS, len(DECOYS))
    answers = _consistent(rng, founder, majority)
    rest = K - majority
    i = 0
    while rest > 0:
        take = min(rest, majority, 2)
        answers += [decoys[i % len(decoys)]] * take
        rest -= take
        i += 1
    rng.shuffle(answers)
    return answers


def build_desk(out_dir: Path) -> None:
    rng = random.Random(SEED)
    out_dir.mkdir(parents=True, exist_ok=True)
    docs: list[Document] = []
    queries: list[Query] = []
    qrels: list[tuple[str, str, int]] = []
    relevant: dict[tuple[str, str], int] = {}
    for i, (town, founder) in enumerate(zip(TOWNS, FOUNDERS)):
        qid = f"q{i:02d}"
        queries.append(Query(qid, f"Who founded the town of {town}?"))
        base = i * 5
        rel = [
            Document(f"d{base:02d}", f"{founder} established the settlement of {town} beside the river in its first year.", f"History of {town}"),
            Document(f"d{base + 1:02d}", f"Records credit {founder} with the charter that started {town}.", "Charters"),
        ]
        distract = [
            Document(f"d{base + 2:02d}", f"{town} fair: the {town} market, the {town} harbour and the bells of {town}. Founded-day is celebrated in {town}.", f"{town} guide"),
            Document(f"d{base + 3:02d}", f"Weather in {town}: {town} sees mild winters, and {town} summers are dry.", f"{town} climate"),
            Document(f"d{base + 4:02d}", f"Trains to {town} leave hourly; the {town} station sits north of old {town}.", f"Travel to {town}"),
        ]
        docs += rel + distract
        for doc, grade in zip(rel, (2, 1)):
            qrels.append((qid, doc.doc_id, grade))
            relevant[(qid, doc.doc_id)] = grade
        for doc in distract:
            qrels.append((qid, doc.doc_id, 0))

    corpus = {d.doc_id: d for d in docs}
    index = build_index(docs)
    answers: dict[str, list[str]] = {}
    meaning: dict[str, str] = {}
    for i, query in enumerate(queries):
        founder = FOUNDERS[i]
        majority = 8 if i in CONFIDENT_QUERIES else 3
        answers[build_answer_prompt(query)] = _dispersed(rng, founder, majority)
        for entry in retrieve_top_k(index, Bm25Params(), query, 10).entries:
            grade = relevant.get((query.query_id, entry.doc_id), 0)
            prompt = build_answer_prompt(query, corpus[entry.doc_id])
            if grade == 2:
                answers[prompt] = _consistent(rng, founder, K)
            elif grade == 1:
                answers[prompt] = _dispersed(rng, founder, 9)
            else:
                answers[prompt] = _dispersed(rng, founder, rng.choice([2, 3, 4]))
    for name in FOUNDERS + DECOYS:
        for form in _variants(name):
            meaning[form] = name

    # Label every pair clustering can ask about, then keep only the ones it actually asks.
    per_query_answers: dict[str, set[str]] = {q.query_id: set() for q in queries}
    for query in queries:
        for prompt, ans in answers.items():
            if f"Question: {query.text}\n" in prompt:
                per_query_answers[query.query_id].update(ans)
    all_labels: dict[str, str] = {}
    for query in queries:
        strings = sorted(per_query_answers[query.query_id])
        for a in strings:
            for b in strings:
                if a != b:
                    same = meaning[a] == meaning[b]
                    all_labels[build_entailment_prompt(query, a, b)] = "Entailment" if same else "contradiction"

    used: dict[str, str] = {}

    class _Recorder(ScriptedBackend):
        def complete(self, prompt: str) -> str:
            label = all_labels[prompt]
            used[prompt] = label
            return label

    recorder = _Recorder(answers, {})
    memo = CacheStore(None)
    for query in queries:
        for prompt, ans in answers.items():
            if f"Question: {query.text}\n" in prompt:
                cluster_semantic(recorder, query, ans, memo)

    with open(out_dir / "corpus.jsonl", "w", encoding="utf-8") as fh:
        for d in docs:
            fh.write(json.dumps({"_id": d.doc_id, "title": d.title, "text": d.text}) + "\n")
    with open(out_dir / "queries.jsonl", "w", encoding="utf-8") as fh:
        for q in queries:
            fh.write(json.dumps({"_id": q.query_id, "text": q.text}) + "\n")
    with open(out_dir / "qrels.tsv", "w", encoding="utf-8") as fh:
        fh.write("query-id\tcorpus-id\tscore\n")
        for qid, did, grade in qrels:
            fh.write(f"{qid}\t{did}\t{grade}\n")
    with open(out_dir / "fixtures.jsonl", "w", encoding="utf-8") as fh:
        for line in iter_fixture_lines(answers, used):
            fh.write(line + "\n")
    config = {
        "dataset": {"corpus": "corpus.jsonl", "queries": "queries.jsonl", "qrels": "qrels.tsv", "qrels_format": "beir_tsv"},
        "backend": {"kind": "scripted", "name": "desk-scripted", "fixtures": "fixtures.jsonl"},
        "lcr": {"t_query": 0.7, "t_upper": 0.9, "t_lower": 0.4, "k_samples": K, "temperature": 1.0, "query_threshold_enabled": True},
        "retrieval": {"k1": 0.9, "b": 0.4, "top_k": 10},
        "output_dir": "out",
        "cache_path": "out/lcr_cache.jsonl",
    }
    (out_dir / "config.json").write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    build_desk(Path(sys.argv[1]) if len(sys.argv) > 1 else DESK_DIR)
