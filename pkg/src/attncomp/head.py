"""Trainable cross-attention scoring head.

The head holds per-head query/key projections over frozen hidden states.
Its forward pass produces only attention weights (scaled dot-product,
row softmax over context positions, mean over heads); there is no value
path because the weights themselves are the output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .corpus import PromptLayout
from .errors import NumericsError, ShapeError
from .rng import PcgStream
from .scoring import AttentionMatrix

DEFAULT_HEAD_COUNT = 16


def _require_finite(name: str, arr: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericsError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class CrossAttentionHead:
    """Projection weights w_q/w_k of shape (H, d_model, d_a) each."""

    w_q: np.ndarray
    w_k: np.ndarray

    def __post_init__(self):
        if self.w_q.ndim != 3 or self.w_q.shape != self.w_k.shape:
            raise ShapeError("w_q and w_k must share shape (H, d_model, d_a)")
        _require_finite("w_q", self.w_q)
        _require_finite("w_k", self.w_k)

    @property
    def h(self) -> int:
        return self.w_q.shape[0]

    @property
    def d_model(self) -> int:
        return self.w_q.shape[1]

    @property
    def d_a(self) -> int:
        return self.w_q.shape[2]


@dataclass(frozen=True)
class HiddenBundle:
    """Frozen hidden states for one assembled prompt."""

    x_c: np.ndarray  # (n, d_model)
    x_q: np.ndarray  # (m, d_model)
    layout: PromptLayout

    def __post_init__(self):
        if self.x_c.ndim != 2 or self.x_q.ndim != 2:
            raise ShapeError("hidden states must be 2-D")
        if self.x_c.shape[1] != self.x_q.shape[1]:
            raise ShapeError("context and query hidden widths differ")
        if self.x_c.shape[0] != self.layout.n:
            raise ShapeError(
                f"x_c has {self.x_c.shape[0]} rows but layout n={self.layout.n}"
            )
        if self.x_q.shape[0] != self.layout.m:
            raise ShapeError(
                f"x_q has {self.x_q.shape[0]} rows but layout m={self.layout.m}"
            )
        _require_finite("x_c", self.x_c)
        _require_finite("x_q", self.x_q)

    @property
    def d_model(self) -> int:
        return self.x_c.shape[1]


@dataclass(frozen=True)
class ForwardTrace:
    """Backpropagation cache: per-head softmax stack and the averaged map."""

    probs: np.ndarray  # (H, m, n)
    averaged: np.ndarray  # (m, n)


def forward(
    bundle: HiddenBundle, head: CrossAttentionHead, keep_trace: bool = False
) -> tuple[AttentionMatrix, ForwardTrace | None]:
    """Head-averaged attention from query rows to context rows.

    Returns the row-stochastic matrix and, when requested, the per-head
    softmax stack needed by the trainer's backward pass.
    """
    if bundle.d_model != head.d_model:
        raise ShapeError(
            f"bundle d_model={bundle.d_model} but head expects {head.d_model}"
        )
    averaged, probs = _kernels.attention_forward(bundle.x_q, bundle.x_c, head.w_q, head.w_k)
    if not np.all(np.isfinite(averaged)):
        raise NumericsError("numerical overflow in attention forward pass")
    matrix = AttentionMatrix(averaged)
    return matrix, (ForwardTrace(probs=probs, averaged=averaged) if keep_trace else None)


def init_random(
    h: int, d_model: int, d_a: int | None = None, seed: int = 0
) -> CrossAttentionHead:
    """Gaussian init with scale 1/sqrt(d_model), snapped to f32 precision.

    The snap keeps save/load round-trips through the 32-bit interchange
    format bit-exact.  d_a defaults to d_model // h.
    """
    if h < 1 or d_model < 1:
        raise ValueError("head count and d_model must be positive")
    if d_a is None:
        if d_model % h != 0:
            raise ValueError("d_model must be divisible by h when d_a is omitted")
        d_a = d_model // h
    if d_a < 1:
        raise ValueError("d_a must be positive")
    stream = PcgStream.derived(seed, "head-init")
    scale = 1.0 / np.sqrt(d_model)
    size = h * d_model * d_a
    w_q = (stream.gaussians(size) * scale).reshape(h, d_model, d_a)
    w_k = (stream.gaussians(size) * scale).reshape(h, d_model, d_a)
    return CrossAttentionHead(
        w_q=w_q.astype(np.float32).astype(np.float64),
        w_k=w_k.astype(np.float32).astype(np.float64),
    )


def init_from_export(bundle_path: str) -> CrossAttentionHead:
    """Load projection weights from an exported head-weight bundle."""
    from .bundles import load_head

    return load_head(bundle_path)


def reorder_documents(bundle: HiddenBundle, doc_ids: list[str]) -> HiddenBundle:
    """Restrict/permute a bundle to the given documents, in the given order.

    Instruction rows stay first; each document's token block moves wholesale.
    Used for per-epoch document shuffling and for rescoring subsets during
    fixpoint compression.
    """
    from .corpus import PromptLayout, SegmentSpan

    spans_by_doc: dict[str, list[SegmentSpan]] = {}
    for span in bundle.layout.segment_spans:
        spans_by_doc.setdefault(span.owner_id, []).append(span)
    missing = [d for d in doc_ids if d not in spans_by_doc]
    if missing:
        raise ShapeError(f"documents not in layout: {missing}")

    ins = bundle.layout.instruction_span
    row_blocks = [bundle.x_c[ins.start : ins.end]]
    new_spans = [ins]
    cursor = ins.end
    for doc_id in doc_ids:
        for span in spans_by_doc[doc_id]:
            row_blocks.append(bundle.x_c[span.start : span.end])
            new_spans.append(
                SegmentSpan(span.kind, span.owner_id, cursor, cursor + span.length, span.ordinal)
            )
            cursor += span.length
    layout = PromptLayout(
        context_spans=tuple(new_spans),
        n=cursor,
        m=bundle.layout.m,
        granularity=bundle.layout.granularity,
    )
    return HiddenBundle(x_c=np.vstack(row_blocks), x_q=bundle.x_q, layout=layout)
