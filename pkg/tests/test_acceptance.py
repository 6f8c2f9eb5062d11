"""Acceptance gate: one test per criterion, each reported as a PASS/FAIL line in the summary."""

import json
import math
import random
import time
from fractions import Fraction
from pathlib import Path

import httpx
import pytest

from lcr.backend import (
    RemoteBackend,
    ScriptedBackend,
    build_answer_prompt,
    build_entailment_prompt,
    parse_chat_completion,
    sample_answers,
)
from lcr.cache import CacheStore
from lcr.cli import main
from lcr.confidence import cluster_semantic, confidence_of, mscp, semantic_entropy
from lcr.data import load_corpus, load_dataset, load_qrels, load_queries, write_run
from lcr.errors import DuplicateDoc, DuplicateQuery, EmptyCorpus, MalformedRecord
from lcr.evaluation import (
    SweepInputs,
    calibration_curve,
    dcg_at_k,
    evaluate_run,
    ndcg_at_k,
    percent_delta,
    qrels_by_query,
    sweep_document_thresholds,
    sweep_query_threshold,
)
from lcr.model import Document, LcrConfig, Query, ScoredList, SemanticPartition
from lcr.reranker import Bin, Candidate, as_fraction, binned_confidence_score, lcr_sort, rerank_query
from lcr.retrieval import Bm25Params, bm25_score, build_index, load_run, retrieve_top_k

from oracles import OracleBackend, brute_bm25, connected_components, hand_lcr, naive_dcg

FIXTURES = Path(__file__).parent / "fixtures"
criterion = pytest.mark.criterion


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def _random_entries(rng: random.Random, n: int, k: int = 10) -> list[Candidate]:
    # confidences on the 1/k lattice so they land on thresholds often; prev scores with ties
    return [
        Candidate(f"d{i}", rng.randint(1, k) / k, rng.choice([rng.random(), float(rng.randint(0, 3))]))
        for i in range(n)
    ]


def _thresholds(rng: random.Random) -> tuple[float, float]:
    lt = rng.randint(1, 9) / 10
    ut = rng.randint(int(lt * 10) + 1, 10) / 10
    return lt, ut


@criterion(1, "worked example: MSCP 0.6 / 1.0 / 0.4 and d1 ranked above d2")
def test_worked_example():
    with Timer() as t:
        q = Query("q", "Who is the president of the United States?")
        d1 = Document("d1", "Donald Trump was inaugurated as president in January 2025.")
        d2 = Document("d2", "The president lives in the White House.")
        meaning = {"Trump": "T", "Donald Trump": "T", "It is Trump.": "T", "Biden": "B", "Joe Biden": "B", "Obama": "O", "Harris": "H"}
        answers = {
            build_answer_prompt(q): ["Trump", "Biden", "Donald Trump", "Obama", "Trump"],
            build_answer_prompt(q, d1): ["Trump", "Donald Trump", "It is Trump.", "Trump", "Donald Trump"],
            build_answer_prompt(q, d2): ["Trump", "Biden", "Joe Biden", "Donald Trump", "Harris"],
        }
        labels = {
            build_entailment_prompt(q, a, b): "Entailment" if meaning[a] == meaning[b] else "Contradiction"
            for a in meaning
            for b in meaning
            if a != b
        }
        backend = ScriptedBackend(answers, labels)
        cfg = LcrConfig(t_query=0.7, t_upper=0.9, t_lower=0.4, k_samples=5)
        partitions = [confidence_of(backend, q, d, cfg).partition for d in (None, d1, d2)]
        assert sorted(partitions[0].sizes, reverse=True) == [3, 1, 1]
        assert partitions[1].sizes == (5,)
        assert sorted(partitions[2].sizes, reverse=True) == [2, 2, 1]
        values = [mscp(p) for p in partitions]
        assert [Fraction(v) for v in values] == [Fraction(v) for v in (0.6, 1.0, 0.4)]
        assert values == [0.6, 1.0, 0.4]

        corpus = {"d1": d1, "d2": d2}
        for qt in (0.61, 0.7, 1.0):
            for prev in ([("d2", 9.0), ("d1", 1.0)], [("d1", 9.0), ("d2", 1.0)], [("d2", 1.0), ("d1", 1.0)]):
                scored = ScoredList.from_pairs("q", prev)
                out = rerank_query(backend, q, scored, corpus, LcrConfig(t_query=qt, t_upper=0.9, t_lower=0.4, k_samples=5))
                assert not out.gated
                assert out.doc_ids == ["d1", "d2"]
                assert [e.bin for e in out.entries] == [Bin.HIGH, Bin.LOW]
    assert t.elapsed < 1.0


@criterion(2, "identity: T_query=0 with the gate on reproduces prev-score order (1000 cases)")
def test_identity_guarantee():
    rng = random.Random(2)
    with Timer() as t:
        for _ in range(1000):
            n = rng.randint(1, 50)
            entries = _random_entries(rng, n)
            lt, ut = _thresholds(rng)
            cfg = LcrConfig(t_query=0.0, t_upper=ut, t_lower=lt)
            query_conf = rng.choice([0.0, rng.random(), 1.0, rng.randint(1, 10) / 10])
            out = lcr_sort(query_conf, entries, cfg)
            assert out.gated
            # reference: insertion sort on prev score, equal scores keep input order
            expect = hand_lcr(query_conf, [(e.doc_id, e.confidence, e.prev_score) for e in entries], 0.0, ut, lt)
            assert out.doc_ids == expect
            prev = [e.prev_score for e in out.entries]
            assert all(a >= b for a, b in zip(prev, prev[1:]))
    assert t.elapsed < 5.0


@criterion(3, "greedy clustering equals connected components for equivalence relations (500 cases)")
def test_clustering_oracle():
    rng = random.Random(3)
    with Timer() as t:
        for case in range(500):
            k = rng.randint(1, 8)
            classes = rng.randint(1, k)
            label = [rng.randrange(classes) for _ in range(k)]
            answers = [f"ans{i}" for i in range(k)]
            cls = dict(zip(answers, label))
            relation = lambda a, b: "entailment" if cls[a] == cls[b] else rng.choice(["neutral", "contradiction"])
            got = cluster_semantic(OracleBackend(relation), Query("q", "x?"), answers).as_sets()
            want = connected_components(k, lambda i, j: label[i] == label[j])
            assert got == want, (case, label)
    assert t.elapsed < 10.0


@criterion(4, "partition invariants and the 2*k*M call bound under arbitrary oracles (1000 cases)")
def test_partition_invariants():
    rng = random.Random(4)
    with Timer() as t:
        for _ in range(1000):
            k = rng.randint(1, 12)
            pool = [f"a{i}" for i in range(rng.randint(1, k))]
            answers = [rng.choice(pool) for _ in range(k)]
            table = {(a, b): rng.choice(["entailment", "neutral", "contradiction", "garbled"]) for a in pool for b in pool}
            backend = OracleBackend(lambda a, b: table[(a, b)])
            part = cluster_semantic(backend, Query("q", "x?"), answers)
            members = [m for c in part.clusters for m in c]
            assert sum(part.sizes) == k
            assert sorted(members) == list(range(k))
            assert all(len(c) > 0 for c in part.clusters)
            assert len(backend.calls) <= 2 * k * part.num_clusters
    assert t.elapsed < 10.0


@criterion(5, "MSCP range, SE zero iff MSCP one, SE(singletons)=ln k, SE({3,1,1})=0.9503")
def test_measure_analytics():
    rng = random.Random(5)
    for _ in range(1000):
        k = rng.randint(1, 30)
        sizes, left = [], k
        while left:
            s = rng.randint(1, left)
            sizes.append(s)
            left -= s
        p = SemanticPartition.from_sizes(sizes)
        assert 1 / k <= mscp(p) <= 1.0
        assert (semantic_entropy(p) == 0.0) == (mscp(p) == 1.0)
    for k in range(1, 101):
        assert abs(semantic_entropy(SemanticPartition.from_sizes([1] * k)) - math.log(k)) < 1e-12
    direct = -(0.6 * math.log(0.6) + 0.2 * math.log(0.2) + 0.2 * math.log(0.2))
    got = semantic_entropy(SemanticPartition.from_sizes([3, 1, 1]))
    assert abs(got - direct) < 1e-4
    assert abs(got - 0.9503) < 1e-4


@criterion(6, "DCG/NDCG hand fixtures within 1e-9; NDCG in [0,1] and 1 on ideal rankings (1000 cases)")
def test_ndcg_oracle():
    assert abs(dcg_at_k([3, 2, 0], 3) - (3 + 2 / math.log2(3))) < 1e-9
    assert abs(dcg_at_k([3, 2, 0], 3) - 4.26186) < 1e-5
    assert abs(ndcg_at_k(["dB", "dA"], {"dA": 3}, 2) - 0.63093) < 1e-5
    assert abs(ndcg_at_k(["dB", "dA"], {"dA": 3}, 2) - 1 / math.log2(3)) < 1e-9
    assert dcg_at_k([], 5) == 0.0 and dcg_at_k([1], 5) == 1.0
    rng = random.Random(6)
    for _ in range(1000):
        n = rng.randint(1, 15)
        judged = {f"d{i}": rng.randint(0, 3) for i in range(n)}
        k = rng.randint(1, 10)
        ranking = [f"d{i}" for i in rng.sample(range(n + 5), rng.randint(0, n + 5))]
        value = ndcg_at_k(ranking, judged, k)
        assert 0.0 <= value <= 1.0
        ideal_dcg = naive_dcg(sorted(judged.values(), reverse=True), k)
        if ideal_dcg > 0:
            assert abs(value - naive_dcg([judged.get(d, 0) for d in ranking], k) / ideal_dcg) < 1e-9
            ideal = sorted(judged, key=lambda d: -judged[d])
            assert ndcg_at_k(ideal, judged, k) == 1.0
        else:
            assert value == 0.0


@criterion(7, "BM25 equals a brute-force scorer exactly on 50 random corpora; ln(4/3) hand case")
def test_bm25_oracle():
    index = build_index([Document("only", "a b")])
    assert abs(bm25_score(index, Bm25Params(), ["a"], 0) - math.log(4 / 3)) < 1e-12
    rng = random.Random(7)
    vocab = [f"w{i}" for i in range(12)]
    params = Bm25Params()
    for _ in range(60):
        docs = [[rng.choice(vocab) for _ in range(rng.randint(1, 15))] for _ in range(rng.randint(1, 20))]
        index = build_index([Document(f"doc{i:02d}", " ".join(d)) for i, d in enumerate(docs)])
        for _ in range(5):
            query = [rng.choice(vocab + ["unseen"]) for _ in range(rng.randint(1, 5))]
            brute = [brute_bm25(docs, query, i) for i in range(len(docs))]
            assert [bm25_score(index, params, query, i) for i in range(len(docs))] == brute
            top = retrieve_top_k(index, params, " ".join(query), 10)
            expect = sorted(((-s, f"doc{i:02d}") for i, s in enumerate(brute) if s > 0))[:10]
            assert [(e.doc_id, e.prev_score) for e in top.entries] == [(d, -s) for s, d in expect]


@criterion(8, "sort properties: stability, permutation, bin monotonicity, gate consistency (1000 cases each)")
def test_sort_properties():
    rng = random.Random(8)
    for prop in ("stability", "permutation", "monotone", "gate"):
        for _ in range(1000):
            entries = _random_entries(rng, rng.randint(1, 40))
            lt, ut = _thresholds(rng)
            cfg = LcrConfig(t_query=rng.randint(0, 10) / 10, t_upper=ut, t_lower=lt)
            position = {e.doc_id: i for i, e in enumerate(entries)}
            if prop == "gate":
                qc = rng.uniform(cfg.t_query, 1.0)
                if as_fraction(qc) < as_fraction(cfg.t_query):
                    qc = cfg.t_query
                shuffled = [Candidate(e.doc_id, rng.random(), e.prev_score) for e in entries]
                a, b = lcr_sort(qc, entries, cfg), lcr_sort(qc, shuffled, cfg)
                assert a.gated and b.gated and a.doc_ids == b.doc_ids
                continue
            if cfg.t_query > 0:
                # query confidence strictly below the gate
                out = lcr_sort(rng.random() * cfg.t_query, entries, cfg)
            else:
                out = lcr_sort(None, entries, LcrConfig(t_upper=ut, t_lower=lt, query_threshold_enabled=False))
            assert not out.gated
            if prop == "permutation":
                assert sorted(out.doc_ids) == sorted(e.doc_id for e in entries)
                assert len(out.doc_ids) == len(entries)
            elif prop == "monotone":
                bins = [e.bin for e in out.entries]
                assert all(x >= y for x, y in zip(bins, bins[1:]))
                assert bins == [binned_confidence_score(e.confidence, ut, lt) for e in out.entries]
            else:
                for x, y in zip(out.entries, out.entries[1:]):
                    if x.bin == y.bin:
                        assert x.prev_score >= y.prev_score
                        if x.prev_score == y.prev_score:
                            assert position[x.doc_id] < position[y.doc_id]
                expect = hand_lcr(None, [(e.doc_id, e.confidence, e.prev_score) for e in entries], 0, ut, lt, gate=False)
                assert out.doc_ids == expect


def _sweep_fixture(desk: Path) -> SweepInputs:
    """Five desk queries scored end to end with the scripted backend."""
    bundle = load_dataset(desk / "corpus.jsonl", desk / "queries.jsonl", desk / "qrels.tsv")
    backend = ScriptedBackend.from_file(desk / "fixtures.jsonl", name="desk-scripted")
    index = build_index(bundle.corpus.values())
    lists, qconf, dconf = {}, {}, {}
    for qid in sorted(bundle.queries)[:5]:
        query = bundle.queries[qid]
        scored = retrieve_top_k(index, Bm25Params(), query, 10)
        out = rerank_query(backend, query, scored, bundle.corpus, LcrConfig(), score_all=True)
        lists[qid] = scored
        qconf[qid] = out.query_confidence
        for e in out.entries:
            dconf[(qid, e.doc_id)] = e.confidence
    return SweepInputs(lists, qconf, dconf, qrels_by_query(bundle.qrels), k=5)


@criterion(9, "sweep grid matches hand application; QT=0 equals baseline; calibration proportions in {0,1}")
def test_sweep_and_calibration(desk):
    inputs = _sweep_fixture(desk)
    assert len(inputs.lists) == 5
    base = inputs.baseline()
    cells = sweep_document_thresholds(inputs)
    grid = [(lt / 10, ut / 10) for lt in range(1, 10) for ut in range(2, 11) if lt < ut]
    assert [(c.t_lower, c.t_upper) for c in cells] == grid
    for cell in cells:
        run = {
            qid: hand_lcr(
                None,
                [(e.doc_id, inputs.doc_conf[(qid, e.doc_id)], e.prev_score) for e in s.entries],
                0.0,
                cell.t_upper,
                cell.t_lower,
                gate=False,
            )
            for qid, s in inputs.lists.items()
        }
        hand = evaluate_run(run, inputs.qrels, 5).mean_ndcg
        assert cell.ndcg == hand
        assert cell.ndcg_delta_percent == percent_delta(hand, base)

    rows = sweep_query_threshold(inputs)
    assert rows[0][0] == 0.0 and rows[0][1] == base
    for qt, value in rows:
        run = {
            qid: hand_lcr(
                inputs.query_conf[qid],
                [(e.doc_id, inputs.doc_conf[(qid, e.doc_id)], e.prev_score) for e in s.entries],
                qt,
                0.9,
                0.4,
            )
            for qid, s in inputs.lists.items()
        }
        assert value == evaluate_run(run, inputs.qrels, 5).mean_ndcg

    rng = random.Random(9)
    records = []
    for _ in range(500):
        rel = rng.randint(0, 1)
        records.append((float(rel), rel))
    bins = calibration_curve(records)
    assert sum(b.sample_count for b in bins) == len(records)
    assert all(b.relevant_proportion in (0.0, 1.0) for b in bins)
    assert bins[0].relevant_proportion == 0.0 and bins[9].relevant_proportion == 1.0


@criterion(10, "format round-trips: run files, loader rejections, chat-completion choices")
def test_format_round_trips(tmp_path):
    rng = random.Random(10)
    for trial in range(50):
        outcomes = []
        for q in range(rng.randint(1, 5)):
            entries = _random_entries(rng, rng.randint(1, 12))
            outcomes.append(lcr_sort(rng.random(), entries, LcrConfig(t_query=0.5), f"q{q}"))
        path = tmp_path / f"run{trial}"
        write_run(outcomes, "lcr", path)
        back = load_run(path)
        assert {o.query_id: o.doc_ids for o in outcomes} == {q: s.doc_ids for q, s in back.items()}

    def jsonl(name, *lines):
        p = tmp_path / name
        p.write_text("".join(line + "\n" for line in lines))
        return p

    rejections = [
        (load_corpus, jsonl("c1", '{"_id": "d1", "title": "T"}'), MalformedRecord),
        (load_corpus, jsonl("c2", "{oops"), MalformedRecord),
        (load_corpus, jsonl("c3", '{"_id": "d1", "text": "a"}', '{"_id": "d1", "text": "b"}'), DuplicateDoc),
        (load_corpus, jsonl("c4"), EmptyCorpus),
        (load_queries, jsonl("q1", '{"_id": "q1", "text": "a"}', '{"_id": "q1", "text": "b"}'), DuplicateQuery),
        (load_queries, jsonl("q2", '{"_id": "q1", "text": " "}'), MalformedRecord),
        (load_qrels, jsonl("r1", "q1\td3\t-2"), MalformedRecord),
        (load_qrels, jsonl("r2", "q1\td3"), MalformedRecord),
        (lambda p: load_qrels(p, "trec4col"), jsonl("r3", "q1 0 d3 -1"), MalformedRecord),
    ]
    for loader, path, error in rejections:
        with pytest.raises(error):
            loader(path)

    body = json.loads((FIXTURES / "chat_completion_2choices.json").read_text())
    assert parse_chat_completion(body) == ["Trump", "Donald Trump"]
    requests = []

    def handler(request):
        requests.append(json.loads(request.content))
        return httpx.Response(200, json=body)

    backend = RemoteBackend("http://llm.test/v1/chat/completions", "m", transport=httpx.MockTransport(handler))
    cache = CacheStore(None)
    for _ in range(2):
        assert sample_answers(backend, "Who?", 2, 1.0, cache).answers == ("Trump", "Donald Trump")
    assert len(requests) == 1 and requests[0]["n"] == 2


@criterion(11, "desk benchmark: index, retrieve, rerank, eval in under 30 s; reranked NDCG@5 >= baseline")
def test_desk_end_to_end(desk, capsys):
    cfg = str(desk / "config.json")
    with Timer() as t:
        assert main(["index", "--config", cfg]) == 0
        assert main(["retrieve", "--config", cfg]) == 0
        assert main(["rerank", "--config", cfg, "--sequential"]) == 0
        capsys.readouterr()
        means = {}
        for name in ("bm25.run", "lcr.run"):
            assert main(["eval", "--config", cfg, "--run", str(desk / "out" / name)]) == 0
            last = capsys.readouterr().out.strip().splitlines()[-1]
            means[name] = float(last.split(",")[1])
    assert len(load_corpus(desk / "corpus.jsonl")) == 50 and len(load_queries(desk / "queries.jsonl")) == 10
    assert t.elapsed < 30.0
    assert means["lcr.run"] >= means["bm25.run"]
    print(f"desk NDCG@5 baseline={means['bm25.run']:.6f} lcr={means['lcr.run']:.6f} elapsed={t.elapsed:.2f}s")
