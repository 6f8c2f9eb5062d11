"""Training-free reranking from black-box LLM answer consistency."""

from lcr.backend import (
    EntailmentLabel,
    RemoteBackend,
    SampleBatch,
    ScriptedBackend,
    build_answer_prompt,
    build_entailment_prompt,
    classify_entailment,
    sample_answers,
)
from lcr.cache import CacheStore
from lcr.confidence import (
    ConfidenceRecord,
    bidirectional_entails,
    cluster_semantic,
    confidence_of,
    mscp,
    semantic_entropy,
)
from lcr.evaluation import calibration_curve, dcg_at_k, evaluate_run, ndcg_at_k
from lcr.model import (
    Document,
    LcrConfig,
    Query,
    RelevanceJudgment,
    ScoredEntry,
    ScoredList,
    SemanticPartition,
    validate_scored_list,
)
from lcr.reranker import Bin, Candidate, RerankOutcome, binned_confidence_score, lcr_sort, rerank_query
from lcr.retrieval import Bm25Params, InvertedIndex, bm25_score, build_index, load_run, retrieve_top_k, tokenize

__version__ = "0.1.0"
