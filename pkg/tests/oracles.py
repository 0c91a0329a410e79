"""Independent reference implementations used as test oracles.

These deliberately avoid the library's own code paths: plain loops and a
literal transcription of the selection pseudo-code, so they can vouch for
the optimized implementations.
"""

from __future__ import annotations

import numpy as np


def literal_topp(s_ins: float, doc_scores: list[float], p: float, epsilon: float) -> list[int]:
    """Line-by-line transcription of the top-p selection procedure.

    Sort indices by descending score (ties: lower index first), start the
    running sum at the instruction score, and stop before adding a segment
    once the sum has reached p or the segment's score is below epsilon.
    Returns selected indices in selection order.
    """
    order = sorted(range(len(doc_scores)), key=lambda i: (-doc_scores[i], i))
    total = s_ins
    selected = []
    for i in order:
        if total >= p or doc_scores[i] < epsilon:
            break
        total += doc_scores[i]
        selected.append(i)
    return selected


def segment_score_loops(weights: np.ndarray, spans: list[tuple[int, int]]) -> list[float]:
    """Double-loop aggregation: mean over rows of summed span mass."""
    m = weights.shape[0]
    out = []
    for start, end in spans:
        total = 0.0
        for i in range(m):
            for j in range(start, end):
                total += weights[i, j]
        out.append(total / m)
    return out


def mean_matrix_loops(stack: list[np.ndarray]) -> np.ndarray:
    out = np.zeros_like(stack[0])
    for head in stack:
        for i in range(out.shape[0]):
            for j in range(out.shape[1]):
                out[i, j] += head[i, j]
    return out / len(stack)


def sort_prefix_sums(scores: list[float], k_max: int) -> list[float]:
    ordered = sorted(scores, reverse=True)
    out = []
    total = 0.0
    for k in range(min(k_max, len(ordered))):
        total += ordered[k]
        out.append(total)
    return out


def pearson_two_pass(xs: list[float], ys: list[float]) -> float:
    """Textbook covariance-over-stddevs formula."""
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    cov = sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / n
    vx = sum((x - mx) ** 2 for x in xs) / n
    vy = sum((y - my) ** 2 for y in ys) / n
    return cov / np.sqrt(vx * vy)


def random_row_stochastic(rng: np.random.Generator, m: int, n: int) -> np.ndarray:
    w = rng.random((m, n)) + 1e-9
    return w / w.sum(axis=1, keepdims=True)


def random_partition_layout(rng: np.random.Generator, n: int, max_docs: int = 5):
    """Random instruction+document span partition of [0, n)."""
    from attncomp.corpus import (
        INSTRUCTION_ID,
        Granularity,
        PromptLayout,
        SegmentSpan,
        SpanKind,
    )

    n_docs = int(rng.integers(1, max_docs + 1))
    cuts = sorted(rng.choice(np.arange(1, n), size=n_docs, replace=False).tolist())
    bounds = [0] + cuts + [n]
    spans = [SegmentSpan(SpanKind.INSTRUCTION, INSTRUCTION_ID, 0, bounds[1])]
    for k in range(1, len(bounds) - 1):
        spans.append(
            SegmentSpan(SpanKind.DOCUMENT, f"d{k}", bounds[k], bounds[k + 1])
        )
    return PromptLayout(
        context_spans=tuple(spans),
        n=n,
        m=1,
        granularity=Granularity.DOCUMENT,
    )
