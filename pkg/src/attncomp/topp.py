"""Adaptive top-p selection of high-attention segments.

Segments are visited in descending score order (ties broken by lower
original index).  The running sum starts at the instruction score; the loop
stops before adding a segment once the sum has reached the threshold `p`
or the next segment's score drops below the floor `epsilon`.  The retained
set is re-emitted in original order for prompt assembly.
"""

from __future__ import annotations

from dataclasses import dataclass

from .scoring import SegmentScores

DEFAULT_TOP_P = 0.95
DEFAULT_EPSILON_DOCUMENT = 1e-2
DEFAULT_EPSILON_SENTENCE = 1e-3


@dataclass(frozen=True)
class TopPConfig:
    p: float = DEFAULT_TOP_P
    epsilon: float = DEFAULT_EPSILON_DOCUMENT

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ValueError("p must lie in (0, 1]")
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be non-negative")


@dataclass(frozen=True)
class CompressionResult:
    """Retained segment ids in original order, plus selection bookkeeping."""

    kept: tuple[str, ...]
    cumulative_score: float
    selection_order: tuple[str, ...]

    @property
    def kept_set(self) -> frozenset[str]:
        return frozenset(self.kept)


def compress(scores: SegmentScores, config: TopPConfig) -> CompressionResult:
    """Select the minimal high-score segment subset under the threshold."""
    units = scores.selection_units()
    order = sorted(range(len(units)), key=lambda i: (-units[i][1], i))

    total = scores.s_ins
    selected: list[int] = []
    for i in order:
        score = units[i][1]
        if total >= config.p or score < config.epsilon:
            break
        total += score
        selected.append(i)

    kept = tuple(units[i][0] for i in sorted(selected))
    selection_order = tuple(units[i][0] for i in selected)
    return CompressionResult(kept=kept, cumulative_score=total, selection_order=selection_order)
