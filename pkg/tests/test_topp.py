import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attncomp.scoring import SegmentScores
from attncomp.topp import (
    DEFAULT_EPSILON_DOCUMENT,
    DEFAULT_EPSILON_SENTENCE,
    DEFAULT_TOP_P,
    CompressionResult,
    TopPConfig,
    compress,
)

from oracles import literal_topp


def make_scores(s_ins, values):
    return SegmentScores(
        s_ins=s_ins, doc_scores=tuple((f"d{i+1}", v) for i, v in enumerate(values))
    )


class TestDefaults:
    def test_document_defaults(self):
        config = TopPConfig()
        assert config.p == DEFAULT_TOP_P == 0.95
        assert config.epsilon == DEFAULT_EPSILON_DOCUMENT == 1e-2

    def test_sentence_epsilon_constant(self):
        assert DEFAULT_EPSILON_SENTENCE == 1e-3

    def test_invalid_p_rejected(self):
        with pytest.raises(ValueError):
            TopPConfig(p=0.0)
        with pytest.raises(ValueError):
            TopPConfig(p=1.2)

    def test_negative_epsilon_rejected(self):
        with pytest.raises(ValueError):
            TopPConfig(epsilon=-1e-9)


class TestCompressTraces:
    def test_threshold_reached_midway(self):
        scores = make_scores(0.1, [0.5, 0.25, 0.1, 0.05])
        result = compress(scores, TopPConfig(p=0.8, epsilon=0.01))
        assert result.kept == ("d1", "d2")
        assert result.cumulative_score == pytest.approx(0.85)

    def test_instruction_alone_meets_threshold(self):
        scores = make_scores(0.96, [0.02, 0.01, 0.01])
        result = compress(scores, TopPConfig(p=0.95, epsilon=0.01))
        assert result.kept == ()
        assert result.cumulative_score == pytest.approx(0.96)

    def test_epsilon_floor_filters_everything(self):
        scores = make_scores(0.0, [0.004, 0.003])
        result = compress(scores, TopPConfig(p=0.95, epsilon=0.01))
        assert result.kept == ()

    def test_loop_exhausts(self):
        scores = make_scores(0.05, [0.4, 0.3, 0.25])
        result = compress(scores, TopPConfig(p=0.99, epsilon=0.01))
        assert result.kept == ("d1", "d2", "d3")
        assert result.cumulative_score == pytest.approx(1.0)

    def test_empty_document_list(self):
        result = compress(make_scores(0.3, []), TopPConfig())
        assert result.kept == ()
        assert result.cumulative_score == pytest.approx(0.3)

    def test_score_equal_to_epsilon_is_kept(self):
        # the floor break is strict less-than
        scores = make_scores(0.0, [0.01])
        result = compress(scores, TopPConfig(p=0.95, epsilon=0.01))
        assert result.kept == ("d1",)

    def test_ties_break_by_lower_index(self):
        scores = make_scores(0.0, [0.3, 0.3, 0.3])
        result = compress(scores, TopPConfig(p=0.55, epsilon=0.01))
        assert result.selection_order == ("d1", "d2")

    def test_kept_in_original_order(self):
        scores = make_scores(0.0, [0.1, 0.5, 0.35])
        result = compress(scores, TopPConfig(p=0.9, epsilon=0.01))
        assert result.selection_order == ("d2", "d3", "d1")
        assert result.kept == ("d1", "d2", "d3")


class TestOracleEquivalence:
    def test_randomized_against_literal_interpreter(self):
        rng = np.random.default_rng(404)
        for _ in range(2000):
            k = int(rng.integers(0, 12))
            raw = rng.random(k + 2)
            shares = raw / raw.sum()
            s_ins = float(shares[0])
            values = shares[1 : k + 1].tolist()
            if rng.random() < 0.5:  # force ties and epsilon-equal cases
                values = [round(v, 2) for v in values]
            p = float(rng.choice([0.3, 0.5, 0.8, 0.9, 0.95, 1.0]))
            eps = float(rng.choice([0.0, 1e-3, 1e-2, 0.05]))
            expected = literal_topp(s_ins, values, p, eps)
            scores = make_scores(s_ins, values)
            result = compress(scores, TopPConfig(p=p, epsilon=eps))
            assert list(result.selection_order) == [f"d{i+1}" for i in expected]
            assert result.cumulative_score == pytest.approx(
                s_ins + sum(values[i] for i in expected), abs=1e-9
            )


score_lists = st.lists(st.floats(0, 1, allow_nan=False), min_size=0, max_size=12)


class TestProperties:
    @given(score_lists, st.floats(0.05, 1.0), st.floats(0.0, 0.1))
    @settings(max_examples=200)
    def test_kept_subset_in_original_order(self, values, p, eps):
        result = compress(make_scores(0.1, values), TopPConfig(p=p, epsilon=eps))
        ids = [f"d{i+1}" for i in range(len(values))]
        assert list(result.kept) == [i for i in ids if i in result.kept_set]

    @given(score_lists, st.floats(0.05, 0.9), st.floats(0.0, 0.1), st.floats(0.0, 0.1))
    @settings(max_examples=200)
    def test_raising_p_never_shrinks_kept(self, values, p, dp, eps):
        low = compress(make_scores(0.05, values), TopPConfig(p=p, epsilon=eps))
        high = compress(make_scores(0.05, values), TopPConfig(p=min(p + dp, 1.0), epsilon=eps))
        assert low.kept_set <= high.kept_set

    def test_concentration_never_increases_kept(self):
        # same total mass, concentrated into fewer documents
        concentrated = make_scores(0.1, [0.6, 0.0, 0.0, 0.0])
        dispersed = make_scores(0.1, [0.15, 0.15, 0.15, 0.15])
        config = TopPConfig(p=0.6, epsilon=0.01)
        assert len(compress(concentrated, config).kept) <= len(
            compress(dispersed, config).kept
        )

    @given(score_lists, st.floats(0.05, 1.0), st.floats(0.0, 0.1))
    @settings(max_examples=200)
    def test_cumulative_score_invariant(self, values, p, eps):
        scores = make_scores(0.07, values)
        result = compress(scores, TopPConfig(p=p, epsilon=eps))
        doc_map = dict(scores.doc_scores)
        assert result.cumulative_score == pytest.approx(
            0.07 + sum(doc_map[d] for d in result.kept), abs=1e-9
        )

    def test_sentence_units_consumed_at_sentence_granularity(self):
        scores = SegmentScores(
            s_ins=0.0,
            doc_scores=(("d1", 0.6), ("d2", 0.4)),
            sentence_scores=(("d1::0", 0.5), ("d1::1", 0.1), ("d2::0", 0.4)),
        )
        result = compress(scores, TopPConfig(p=0.85, epsilon=0.01))
        assert result.kept == ("d1::0", "d2::0")
