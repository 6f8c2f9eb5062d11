import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lcr.errors import DuplicateDoc, EmptyCorpus, MalformedRunLine, NonContiguousRanks
from lcr.model import Document, Query
from lcr.retrieval import Bm25Params, InvertedIndex, bm25_score, build_index, load_run, retrieve_top_k, tokenize

from oracles import brute_bm25


@pytest.mark.parametrize(
    "text,tokens",
    [("The U.S. President!", ["the", "u", "s", "president"]), ("", []), ("BM25-score", ["bm25", "score"])],
)
def test_tokenize(text, tokens):
    assert tokenize(text) == tokens


@given(st.text())
def test_tokenize_idempotent(text):
    tokens = tokenize(text)
    assert tokenize(" ".join(tokens)) == tokens


def test_index_counts():
    index = build_index([Document("d", "a a b")])
    assert index.postings == {"a": ((0, 2),), "b": ((0, 1),)}
    assert index.avgdl == 3
    assert build_index([Document("x", "a b"), Document("y", "a b c d")]).avgdl == 3


def test_index_errors():
    with pytest.raises(DuplicateDoc):
        build_index([Document("d", "a"), Document("d", "b")])
    with pytest.raises(EmptyCorpus):
        build_index([])


def test_hand_score():
    index = build_index([Document("d", "a b")])
    assert abs(bm25_score(index, Bm25Params(), ["a"], 0) - math.log(4 / 3)) < 1e-12
    assert bm25_score(index, Bm25Params(), ["zzz"], 0) == 0.0


def test_repeated_query_terms_count_once():
    index = build_index([Document("d", "a b"), Document("e", "c")])
    assert bm25_score(index, Bm25Params(), ["a", "a"], 0) == bm25_score(index, Bm25Params(), ["a"], 0)


def test_matches_brute_force():
    rng = random.Random(7)
    vocab = list("abcdefg")
    for _ in range(20):
        docs = [[rng.choice(vocab) for _ in range(rng.randint(1, 8))] for _ in range(rng.randint(1, 10))]
        index = build_index([Document(f"d{i}", " ".join(d)) for i, d in enumerate(docs)])
        query = [rng.choice(vocab) for _ in range(3)]
        for i in range(len(docs)):
            assert bm25_score(index, Bm25Params(), query, i) == brute_bm25(docs, query, i)


def test_top_k_truncation_and_ties():
    docs = [Document("z", "apple"), Document("b", "apple"), Document("m", "pear")]
    index = build_index(docs)
    scored = retrieve_top_k(index, Bm25Params(), Query("q", "apple"), 10)
    assert scored.doc_ids == ["b", "z"]
    assert [e.original_rank for e in scored.entries] == [1, 2]
    assert retrieve_top_k(index, Bm25Params(), "apple", 1).doc_ids == ["b"]
    assert retrieve_top_k(index, Bm25Params(), "nothing", 5).entries == ()


def test_index_save_load(tmp_path):
    index = build_index([Document("x", "alpha beta", "T"), Document("y", "beta gamma gamma")])
    path = tmp_path / "i"
    index.save(path)
    assert path.read_text().startswith("LCR-BM25-INDEX 1\n")
    back = InvertedIndex.load(path)
    assert back.postings == index.postings and back.doc_ids == index.doc_ids and back.avgdl == index.avgdl
    path.write_text("garbage\n{}")
    with pytest.raises(ValueError):
        InvertedIndex.load(path)


def test_load_run(tmp_path):
    path = tmp_path / "r"
    path.write_text("q1 Q0 d7 1 12.5 tag\nq1 Q0 d2 2 3 tag\nq2 Q0 d1 1 1 tag\n")
    run = load_run(path)
    assert run["q1"].entries[0].doc_id == "d7" and run["q1"].entries[0].prev_score == 12.5
    assert run["q1"].doc_ids == ["d7", "d2"]
    path.write_text("q1 Q0 d7 1 12.5\n")
    with pytest.raises(MalformedRunLine):
        load_run(path)
    path.write_text("q1 Q0 d7 1 x tag\n")
    with pytest.raises(MalformedRunLine):
        load_run(path)
    path.write_text("q1 Q0 d7 1 1 t\nq1 Q0 d8 3 1 t\n")
    with pytest.raises(NonContiguousRanks):
        load_run(path)
