import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lcr.errors import DuplicateDoc, InvalidConfig, InvalidThresholds, NonFiniteScore, RankGap
from lcr.model import (
    Document,
    LcrConfig,
    RelevanceJudgment,
    ScoredEntry,
    ScoredList,
    SemanticPartition,
    validate_scored_list,
)


class TestValidateScoredList:
    def test_accepts_well_formed(self):
        sl = ScoredList("q", (ScoredEntry("d1", 0.5, 1), ScoredEntry("d2", 0.3, 2)))
        assert validate_scored_list(sl) is sl

    def test_duplicate_doc(self):
        sl = ScoredList("q", (ScoredEntry("d1", 0.5, 1), ScoredEntry("d1", 0.3, 2)))
        with pytest.raises(DuplicateDoc) as err:
            validate_scored_list(sl)
        assert err.value.doc_id == "d1"

    @pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
    def test_non_finite(self, bad):
        with pytest.raises(NonFiniteScore):
            validate_scored_list(ScoredList("q", (ScoredEntry("d1", bad, 1),)))

    def test_rank_gap(self):
        sl = ScoredList("q", (ScoredEntry("d1", 0.5, 1), ScoredEntry("d2", 0.3, 3)))
        with pytest.raises(RankGap) as err:
            validate_scored_list(sl)
        assert err.value.position == 2


@given(
    st.lists(
        st.tuples(st.text(min_size=1, max_size=8), st.floats(allow_nan=False, allow_infinity=False)),
        max_size=20,
        unique_by=lambda t: t[0],
    )
)
def test_scored_list_json_round_trip(pairs):
    sl = validate_scored_list(ScoredList.from_pairs("q1", pairs))
    back = ScoredList.from_dict(json.loads(json.dumps(sl.to_dict())))
    assert back == sl


class TestLcrConfig:
    def test_defaults_valid(self):
        cfg = LcrConfig()
        assert cfg.k_samples == 10 and cfg.temperature == 1.0

    @pytest.mark.parametrize("lt,ut", [(0.5, 0.5), (0.6, 0.4)])
    def test_lower_must_be_below_upper(self, lt, ut):
        with pytest.raises(InvalidThresholds):
            LcrConfig(t_lower=lt, t_upper=ut)

    def test_threshold_out_of_range(self):
        with pytest.raises(InvalidThresholds):
            LcrConfig(t_upper=1.01)

    def test_k_and_temperature(self):
        with pytest.raises(InvalidConfig):
            LcrConfig(k_samples=0)
        with pytest.raises(InvalidConfig):
            LcrConfig(temperature=0)


class TestSemanticPartition:
    def test_sizes_and_representatives(self):
        p = SemanticPartition(((0, 2), (1,), (3, 4)), 5)
        assert p.sizes == (2, 1, 2)
        assert p.num_clusters == 3
        assert [c[0] for c in p.clusters] == [0, 1, 3]

    @pytest.mark.parametrize(
        "clusters,k",
        [(((0, 1), (1, 2)), 3), (((0,), ()), 1), (((0, 1),), 3), (((0, 5),), 2)],
    )
    def test_rejects_non_partitions(self, clusters, k):
        with pytest.raises(ValueError):
            SemanticPartition(clusters, k)

    def test_from_sizes(self):
        assert SemanticPartition.from_sizes([3, 1, 1]).clusters == ((0, 1, 2), (3,), (4,))


def test_document_full_text_joins_title():
    assert Document("d", "body", "Title").full_text == "Title body"
    assert Document("d", "body").full_text == "body"
    with pytest.raises(ValueError):
        Document("d", "   ")


def test_negative_grade_rejected():
    with pytest.raises(ValueError):
        RelevanceJudgment("q", "d", -1)
