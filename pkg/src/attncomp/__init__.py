"""Attention-guided context compression for retrieval-augmented generation.

Scores retrieved documents by aggregated query-to-context attention,
selects a minimal subset under a cumulative top-p threshold, trains the
lightweight cross-attention scoring head behind those attention maps, and
derives a response-confidence estimate from the instruction score.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .corpus import (
    Document,
    Granularity,
    PromptLayout,
    QuerySample,
    SegmentSpan,
    SpanKind,
    assemble_layout,
    fallback_token_count,
    split_sentences,
)
from .head import CrossAttentionHead, HiddenBundle, forward, init_from_export, init_random
from .scoring import (
    AttentionMatrix,
    HeadStack,
    SegmentScores,
    cumulative_topk_curve,
    mean_over_heads,
    per_head_evidence_scores,
    segment_scores,
)
from .topp import CompressionResult, TopPConfig, compress

__version__ = "0.1.0"

__all__ = [
    "AttentionMatrix",
    "CompressionResult",
    "CrossAttentionHead",
    "Document",
    "Granularity",
    "HeadStack",
    "HiddenBundle",
    "KERNEL_BACKEND",
    "PromptLayout",
    "QuerySample",
    "SegmentScores",
    "SegmentSpan",
    "SpanKind",
    "TopPConfig",
    "assemble_layout",
    "compress",
    "cumulative_topk_curve",
    "fallback_token_count",
    "forward",
    "init_from_export",
    "init_random",
    "mean_over_heads",
    "per_head_evidence_scores",
    "segment_scores",
    "split_sentences",
]
