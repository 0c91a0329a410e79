"""Aggregation of query-to-context attention into per-segment scores.

The segment score is the mean over query rows of the attention mass
falling inside the segment's token span.  Because every row of a valid
attention matrix sums to one and the spans partition the context, the
instruction score plus all document scores sum to one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Granularity, PromptLayout, SegmentSpan, SpanKind
from .errors import ShapeError

ROW_SUM_TOL = 1e-5


@dataclass(frozen=True)
class AttentionMatrix:
    """Row-stochastic query-to-context weights, shape (m, n)."""

    weights: np.ndarray

    def __post_init__(self):
        w = self.weights
        if w.ndim != 2 or w.size == 0:
            raise ShapeError("attention matrix must be 2-D and non-empty")
        if not np.all(np.isfinite(w)):
            raise ValueError("attention matrix contains non-finite entries")
        if w.min() < -1e-9 or w.max() > 1.0 + ROW_SUM_TOL:
            raise ValueError("attention entries must lie in [0, 1]")
        row_err = np.abs(w.sum(axis=1) - 1.0).max()
        if row_err > ROW_SUM_TOL:
            raise ValueError(f"rows must sum to 1 (worst error {row_err:.3g})")

    @property
    def m(self) -> int:
        return self.weights.shape[0]

    @property
    def n(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class HeadStack:
    """Per-head attention matrices of identical shape, H >= 1."""

    heads: tuple[AttentionMatrix, ...]

    def __post_init__(self):
        if not self.heads:
            raise ShapeError("head stack must contain at least one head")
        shape = self.heads[0].weights.shape
        if any(h.weights.shape != shape for h in self.heads):
            raise ShapeError("heads must share one shape")

    @property
    def h(self) -> int:
        return len(self.heads)

    def as_array(self) -> np.ndarray:
        return np.stack([h.weights for h in self.heads])


@dataclass(frozen=True)
class SegmentScores:
    """Instruction score plus per-document scores (retrieval order).

    `sentence_scores` is populated for sentence-level layouts; document
    scores are then the per-owner rollup.  `selection_units()` yields the
    list the compressor consumes at the layout's granularity.
    """

    s_ins: float
    doc_scores: tuple[tuple[str, float], ...]
    sentence_scores: tuple[tuple[str, float], ...] | None = None

    def selection_units(self) -> tuple[tuple[str, float], ...]:
        return self.sentence_scores if self.sentence_scores is not None else self.doc_scores

    def doc_score_map(self) -> dict[str, float]:
        return dict(self.doc_scores)

    @property
    def total(self) -> float:
        return self.s_ins + sum(s for _, s in self.doc_scores)


def _span_mass(weights: np.ndarray, span: SegmentSpan) -> float:
    return float(weights[:, span.start : span.end].sum())


def segment_scores(matrix: AttentionMatrix, layout: PromptLayout) -> SegmentScores:
    """Aggregate an attention matrix into per-segment scores."""
    w = matrix.weights
    if w.shape != (layout.m, layout.n):
        raise ShapeError(
            f"attention shape {w.shape} does not match layout ({layout.m}, {layout.n})"
        )
    m = layout.m
    s_ins = _span_mass(w, layout.instruction_span) / m

    doc_totals: dict[str, float] = {}
    doc_order: list[str] = []
    sentence_scores: list[tuple[str, float]] = []
    for span in layout.segment_spans:
        mass = _span_mass(w, span) / m
        if span.owner_id not in doc_totals:
            doc_totals[span.owner_id] = 0.0
            doc_order.append(span.owner_id)
        doc_totals[span.owner_id] += mass
        if span.kind is SpanKind.SENTENCE:
            sentence_scores.append((span.ident, mass))

    return SegmentScores(
        s_ins=s_ins,
        doc_scores=tuple((d, doc_totals[d]) for d in doc_order),
        sentence_scores=(
            tuple(sentence_scores) if layout.granularity is Granularity.SENTENCE else None
        ),
    )


def mean_over_heads(stack: HeadStack) -> AttentionMatrix:
    """Elementwise mean across heads; preserves row-stochasticity."""
    return AttentionMatrix(stack.as_array().mean(axis=0))


def per_head_evidence_scores(
    stack: HeadStack, evidence_spans: list[SegmentSpan], layout: PromptLayout
) -> list[float]:
    """Per-head attention mass on the given evidence spans.

    Returns one score per head: the segment-score aggregation summed over
    all evidence spans.  Spans must lie inside the layout's context range.
    """
    arr = stack.as_array()
    if arr.shape[1:] != (layout.m, layout.n):
        raise ShapeError("head stack shape does not match layout")
    for span in evidence_spans:
        if span.start < 0 or span.end > layout.n:
            raise ShapeError(
                f"evidence span [{span.start}, {span.end}) outside context [0, {layout.n})"
            )
    scores = []
    for h in range(arr.shape[0]):
        mass = sum(_span_mass(arr[h], span) for span in evidence_spans)
        scores.append(mass / layout.m)
    return scores


def cumulative_topk_curve(scores: list[float], k_max: int) -> list[float]:
    """Cumulative sum of the k largest scores for k = 1..min(k_max, len)."""
    if not scores:
        raise ValueError("scores must be non-empty")
    if k_max < 1:
        raise ValueError("k_max must be positive")
    if min(scores) < 0:
        raise ValueError("scores must be non-negative")
    ordered = sorted(scores, reverse=True)
    out = []
    total = 0.0
    for k in range(min(k_max, len(ordered))):
        total += ordered[k]
        out.append(total)
    return out
