import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attncomp.corpus import (
    INSTRUCTION_ID,
    Granularity,
    PromptLayout,
    SegmentSpan,
    SpanKind,
)
from attncomp.errors import ShapeError
from attncomp.scoring import (
    AttentionMatrix,
    HeadStack,
    cumulative_topk_curve,
    mean_over_heads,
    per_head_evidence_scores,
    segment_scores,
)

from oracles import (
    mean_matrix_loops,
    random_partition_layout,
    random_row_stochastic,
    segment_score_loops,
    sort_prefix_sums,
)


def doc_layout(ins_end, doc_bounds, m=1):
    spans = [SegmentSpan(SpanKind.INSTRUCTION, INSTRUCTION_ID, 0, ins_end)]
    for k, (a, b) in enumerate(doc_bounds, start=1):
        spans.append(SegmentSpan(SpanKind.DOCUMENT, f"d{k}", a, b))
    return PromptLayout(
        context_spans=tuple(spans), n=doc_bounds[-1][1], m=m, granularity=Granularity.DOCUMENT
    )


class TestAttentionMatrixInvariants:
    def test_row_sum_violation_rejected(self):
        w = np.full((2, 3), 0.5)
        with pytest.raises(ValueError, match="sum to 1"):
            AttentionMatrix(w)

    def test_negative_entry_rejected(self):
        w = np.array([[1.2, -0.2]])
        with pytest.raises(ValueError, match="\\[0, 1\\]"):
            AttentionMatrix(w)

    def test_low_precision_storage_tolerated(self):
        w = np.full((1, 3), np.float32(1.0 / 3.0)).astype(np.float64)
        AttentionMatrix(w)  # row sum off by float32 rounding only


class TestSegmentScores:
    def test_uniform_attention_gives_length_shares(self):
        layout = doc_layout(3, [(3, 7), (7, 12)])
        scores = segment_scores(AttentionMatrix(np.full((1, 12), 1 / 12)), layout)
        assert scores.s_ins == pytest.approx(0.25)
        assert dict(scores.doc_scores)["d1"] == pytest.approx(1 / 3, abs=1e-4)
        assert dict(scores.doc_scores)["d2"] == pytest.approx(5 / 12, abs=1e-4)

    def test_one_hot_rows_average(self):
        layout = doc_layout(1, [(1, 4)], m=2)
        w = np.array([[1.0, 0, 0, 0], [0, 0, 0, 1.0]])
        scores = segment_scores(AttentionMatrix(w), layout)
        assert scores.s_ins == pytest.approx(0.5)
        assert dict(scores.doc_scores)["d1"] == pytest.approx(0.5)

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(11)
        layout = doc_layout(2, [(2, 5), (5, 8)], m=3)
        w = random_row_stochastic(rng, 3, 8)
        scores = segment_scores(AttentionMatrix(w), layout)
        expected = segment_score_loops(w, [(0, 2), (2, 5), (5, 8)])
        assert scores.s_ins == pytest.approx(expected[0], abs=1e-12)
        assert [s for _, s in scores.doc_scores] == pytest.approx(expected[1:], abs=1e-12)

    def test_shape_mismatch_rejected(self):
        layout = doc_layout(2, [(2, 5)])
        with pytest.raises(ShapeError):
            segment_scores(AttentionMatrix(np.full((1, 4), 0.25)), layout)

    def test_sentence_rollup(self):
        spans = (
            SegmentSpan(SpanKind.INSTRUCTION, INSTRUCTION_ID, 0, 2),
            SegmentSpan(SpanKind.SENTENCE, "d1", 2, 4, 0),
            SegmentSpan(SpanKind.SENTENCE, "d1", 4, 5, 1),
            SegmentSpan(SpanKind.SENTENCE, "d2", 5, 8, 0),
        )
        layout = PromptLayout(spans, n=8, m=1, granularity=Granularity.SENTENCE)
        scores = segment_scores(AttentionMatrix(np.full((1, 8), 1 / 8)), layout)
        assert scores.sentence_scores is not None
        assert [i for i, _ in scores.sentence_scores] == ["d1::0", "d1::1", "d2::0"]
        rollup = dict(scores.doc_scores)
        assert rollup["d1"] == pytest.approx(3 / 8)
        assert rollup["d2"] == pytest.approx(3 / 8)
        # selection units follow the layout granularity
        assert scores.selection_units() == scores.sentence_scores

    @given(st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_normalization(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(6, 30))
        m = int(rng.integers(1, 5))
        layout = random_partition_layout(rng, n)
        layout = PromptLayout(layout.context_spans, n=n, m=m, granularity=layout.granularity)
        scores = segment_scores(AttentionMatrix(random_row_stochastic(rng, m, n)), layout)
        assert scores.total == pytest.approx(1.0, abs=1e-5)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(5)
        w = random_row_stochastic(rng, 2, 9)
        layout = doc_layout(3, [(3, 5), (5, 9)], m=2)
        scores = segment_scores(AttentionMatrix(w), layout)
        # swap the two documents (columns move with their spans)
        swapped = np.concatenate([w[:, :3], w[:, 5:9], w[:, 3:5]], axis=1)
        layout2 = doc_layout(3, [(3, 7), (7, 9)], m=2)
        spans = list(layout2.context_spans)
        spans[1] = SegmentSpan(SpanKind.DOCUMENT, "d2", 3, 7)
        spans[2] = SegmentSpan(SpanKind.DOCUMENT, "d1", 7, 9)
        layout2 = PromptLayout(tuple(spans), n=9, m=2, granularity=Granularity.DOCUMENT)
        scores2 = segment_scores(AttentionMatrix(swapped), layout2)
        assert scores2.s_ins == pytest.approx(scores.s_ins, abs=1e-12)
        assert dict(scores2.doc_scores)["d1"] == pytest.approx(
            dict(scores.doc_scores)["d1"], abs=1e-12
        )
        assert dict(scores2.doc_scores)["d2"] == pytest.approx(
            dict(scores.doc_scores)["d2"], abs=1e-12
        )

    def test_adding_mass_to_segment_never_decreases_score(self):
        rng = np.random.default_rng(9)
        w = random_row_stochastic(rng, 3, 10)
        layout = doc_layout(2, [(2, 6), (6, 10)], m=3)
        before = dict(segment_scores(AttentionMatrix(w), layout).doc_scores)["d1"]
        boosted = w.copy()
        boosted[:, 3] += 0.5  # column inside d1
        boosted /= boosted.sum(axis=1, keepdims=True)
        after = dict(segment_scores(AttentionMatrix(boosted), layout).doc_scores)["d1"]
        assert after >= before


class TestMeanOverHeads:
    def test_single_head_identity(self):
        w = np.full((1, 4), 0.25)
        stack = HeadStack((AttentionMatrix(w),))
        assert np.array_equal(mean_over_heads(stack).weights, w)

    def test_two_heads_midpoint(self):
        stack = HeadStack(
            (AttentionMatrix(np.array([[1.0, 0.0]])), AttentionMatrix(np.array([[0.0, 1.0]])))
        )
        assert mean_over_heads(stack).weights == pytest.approx(np.array([[0.5, 0.5]]))

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(3)
        heads = [random_row_stochastic(rng, 3, 6) for _ in range(4)]
        stack = HeadStack(tuple(AttentionMatrix(h) for h in heads))
        expected = mean_matrix_loops(heads)
        assert np.abs(mean_over_heads(stack).weights - expected).max() < 1e-12

    def test_heterogeneous_shapes_rejected(self):
        with pytest.raises(ShapeError):
            HeadStack(
                (
                    AttentionMatrix(np.full((1, 4), 0.25)),
                    AttentionMatrix(np.full((1, 5), 0.2)),
                )
            )


class TestPerHeadEvidenceScores:
    def test_uniform_head_half_context(self):
        layout = doc_layout(4, [(4, 8)])
        stack = HeadStack((AttentionMatrix(np.full((1, 8), 1 / 8)),))
        evidence = [SegmentSpan(SpanKind.DOCUMENT, "e", 0, 4)]
        assert per_head_evidence_scores(stack, evidence, layout) == pytest.approx([0.5])

    def test_fully_attending_head(self):
        layout = doc_layout(2, [(2, 4)])
        w = np.array([[0.0, 0.0, 0.6, 0.4]])
        stack = HeadStack((AttentionMatrix(w),))
        evidence = [SegmentSpan(SpanKind.DOCUMENT, "e", 2, 4)]
        assert per_head_evidence_scores(stack, evidence, layout) == pytest.approx([1.0])

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(21)
        layout = doc_layout(3, [(3, 6), (6, 12)], m=2)
        heads = [random_row_stochastic(rng, 2, 12) for _ in range(3)]
        stack = HeadStack(tuple(AttentionMatrix(h) for h in heads))
        evidence = [
            SegmentSpan(SpanKind.SENTENCE, "e1", 1, 3),
            SegmentSpan(SpanKind.SENTENCE, "e2", 7, 9),
        ]
        got = per_head_evidence_scores(stack, evidence, layout)
        for h, head in enumerate(heads):
            expected = sum(segment_score_loops(head, [(1, 3), (7, 9)]))
            assert got[h] == pytest.approx(expected, abs=1e-12)

    def test_out_of_range_span_rejected(self):
        layout = doc_layout(2, [(2, 4)])
        stack = HeadStack((AttentionMatrix(np.full((1, 4), 0.25)),))
        with pytest.raises(ShapeError, match="outside context"):
            per_head_evidence_scores(
                stack, [SegmentSpan(SpanKind.DOCUMENT, "e", 2, 5)], layout
            )


class TestCumulativeTopK:
    def test_sorted_prefix(self):
        assert cumulative_topk_curve([0.5, 0.3, 0.2], 3) == pytest.approx([0.5, 0.8, 1.0])

    def test_all_equal(self):
        assert cumulative_topk_curve([0.25] * 4, 2) == pytest.approx([0.25, 0.5])

    def test_matches_oracle(self):
        rng = np.random.default_rng(17)
        scores = rng.random(100).tolist()
        assert cumulative_topk_curve(scores, 100) == pytest.approx(
            sort_prefix_sums(scores, 100), abs=1e-12
        )

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            cumulative_topk_curve([], 3)

    @given(
        st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=30),
        st.integers(1, 40),
    )
    @settings(max_examples=100)
    def test_nondecreasing_and_ends_at_total(self, scores, k_max):
        curve = cumulative_topk_curve(scores, k_max)
        assert all(b >= a - 1e-12 for a, b in zip(curve, curve[1:]))
        if k_max >= len(scores):
            assert curve[-1] == pytest.approx(sum(scores), abs=1e-9)
