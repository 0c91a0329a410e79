"""Binary cross-entropy training of the scoring head.

Supervision is twofold: per-document BCE on the document scores, and an
instruction-level BCE whose target is 1 exactly when no document is
relevant.  Hidden states are frozen inputs, so only the projection weights
receive gradients.  Scores are clamped to [1e-7, 1 - 1e-7] before the logs;
the gradient is defined as zero inside the clamped region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .corpus import SpanKind
from .errors import DivergenceError, NumericsError, ShapeError
from .head import CrossAttentionHead, HiddenBundle, forward, init_random, reorder_documents
from .rng import PcgStream
from .scoring import SegmentScores, segment_scores

SCORE_CLAMP = 1e-7


@dataclass(frozen=True)
class TrainingInstance:
    bundle: HiddenBundle
    labels: tuple[int, ...]

    def __post_init__(self):
        doc_count = len(self.bundle.layout.document_ids())
        if len(self.labels) != doc_count:
            raise ShapeError(
                f"{len(self.labels)} labels for {doc_count} documents"
            )
        if any(r not in (0, 1) for r in self.labels):
            raise ValueError("labels must be 0 or 1")

    @property
    def r_ins(self) -> int:
        """1 iff no document is relevant; derived, so always consistent."""
        return 1 if all(r == 0 for r in self.labels) else 0

    def shuffled_docs(self, stream: PcgStream) -> "TrainingInstance":
        ids = self.bundle.layout.document_ids()
        by_id = dict(zip(ids, self.labels))
        new_order = stream.shuffled(ids)
        return TrainingInstance(
            bundle=reorder_documents(self.bundle, new_order),
            labels=tuple(by_id[d] for d in new_order),
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-4
    batch_size: int = 8
    epochs: int = 8
    lambda_: float = 0.8
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    shuffle_docs_each_epoch: bool = True

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.lambda_ < 0:
            raise ValueError("lambda must be non-negative")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")


@dataclass(frozen=True)
class LossBreakdown:
    l_doc: float
    l_ins: float
    lambda_: float

    @property
    def total(self) -> float:
        return self.l_doc + self.lambda_ * self.l_ins


def _clamp(s: float) -> float:
    return min(max(s, SCORE_CLAMP), 1.0 - SCORE_CLAMP)


def _bce(target: int, s: float) -> float:
    s = _clamp(s)
    return -(target * math.log(s) + (1 - target) * math.log(1.0 - s))


def _bce_grad(target: int, s: float) -> float:
    if s <= SCORE_CLAMP or s >= 1.0 - SCORE_CLAMP:
        return 0.0
    return -(target / s) + (1 - target) / (1.0 - s)


def loss(scores: SegmentScores, labels: tuple[int, ...], lambda_: float) -> LossBreakdown:
    """Document-level plus weighted instruction-level BCE."""
    if len(labels) != len(scores.doc_scores):
        raise ShapeError(
            f"{len(labels)} labels for {len(scores.doc_scores)} document scores"
        )
    l_doc = sum(_bce(r, s) for r, (_, s) in zip(labels, scores.doc_scores))
    r_ins = 1 if all(r == 0 for r in labels) else 0
    l_ins = _bce(r_ins, scores.s_ins)
    return LossBreakdown(l_doc=l_doc, l_ins=l_ins, lambda_=lambda_)


def _column_grads(
    scores: SegmentScores, labels: tuple[int, ...], lambda_: float, bundle: HiddenBundle
) -> np.ndarray:
    """dL/d(segment score) per context column, via span ownership."""
    layout = bundle.layout
    doc_ids = layout.document_ids()
    doc_grad = {
        d: _bce_grad(r, s)
        for d, r, (_, s) in zip(doc_ids, labels, scores.doc_scores)
    }
    r_ins = 1 if all(r == 0 for r in labels) else 0
    ins_grad = lambda_ * _bce_grad(r_ins, scores.s_ins)

    col = np.empty(layout.n, dtype=np.float64)
    for span in layout.context_spans:
        value = ins_grad if span.kind is SpanKind.INSTRUCTION else doc_grad[span.owner_id]
        col[span.start : span.end] = value
    return col


def grad(
    bundle: HiddenBundle,
    head: CrossAttentionHead,
    labels: tuple[int, ...],
    lambda_: float,
) -> tuple[np.ndarray, np.ndarray, LossBreakdown, SegmentScores]:
    """Analytic gradients of the total loss w.r.t. w_q and w_k.

    The chain runs loss -> segment scores -> head-averaged attention ->
    per-head softmax -> logits -> projections.  Also returns the loss and
    scores of the forward pass for logging.
    """
    matrix, trace = forward(bundle, head, keep_trace=True)
    scores = segment_scores(matrix, bundle.layout)
    breakdown = loss(scores, labels, lambda_)
    col = _column_grads(scores, labels, lambda_, bundle)
    d_wq, d_wk = _kernels.attention_backward(
        bundle.x_q, bundle.x_c, head.w_q, head.w_k, trace.probs, col
    )
    if not (np.all(np.isfinite(d_wq)) and np.all(np.isfinite(d_wk))):
        raise DivergenceError(step=-1, message="non-finite gradient")
    return d_wq, d_wk, breakdown, scores


@dataclass
class EpochStats:
    epoch: int
    l_doc: float
    l_ins: float
    total: float


@dataclass
class TrainResult:
    head: CrossAttentionHead
    epoch_log: list[EpochStats] = field(default_factory=list)


class AdamState:
    """Standard Adam moments over one parameter tensor."""

    def __init__(self, shape: tuple[int, ...]):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)

    def step(self, param: np.ndarray, g: np.ndarray, t: int, cfg: TrainConfig) -> np.ndarray:
        self.m = cfg.adam_beta1 * self.m + (1 - cfg.adam_beta1) * g
        self.v = cfg.adam_beta2 * self.v + (1 - cfg.adam_beta2) * g * g
        m_hat = self.m / (1 - cfg.adam_beta1**t)
        v_hat = self.v / (1 - cfg.adam_beta2**t)
        return param - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def train(
    dataset: list[TrainingInstance],
    config: TrainConfig,
    initial_head: CrossAttentionHead | None = None,
) -> TrainResult:
    """Adam over the mean per-instance loss of each batch.

    Deterministic given (dataset, config, initial head): instance order,
    per-epoch document shuffles and gradient accumulation order all derive
    from the config seed.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    d_model = dataset[0].bundle.d_model
    head = initial_head or init_random(
        16, d_model, max(1, d_model // 16), seed=config.seed
    )
    if head.d_model != d_model:
        raise ShapeError("head d_model does not match dataset")

    w_q = head.w_q.copy()
    w_k = head.w_k.copy()
    adam_q = AdamState(w_q.shape)
    adam_k = AdamState(w_k.shape)
    t = 0
    log: list[EpochStats] = []

    for epoch in range(config.epochs):
        order_stream = PcgStream.derived(config.seed, "epoch-order", epoch)
        order = order_stream.shuffled(list(range(len(dataset))))
        sums = np.zeros(3)
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            g_q = np.zeros_like(w_q)
            g_k = np.zeros_like(w_k)
            current = CrossAttentionHead(w_q=w_q, w_k=w_k)
            for idx in batch:
                instance = dataset[idx]
                if config.shuffle_docs_each_epoch:
                    instance = instance.shuffled_docs(
                        PcgStream.derived(config.seed, "doc-shuffle", epoch, idx)
                    )
                try:
                    d_wq, d_wk, breakdown, _ = grad(
                        instance.bundle, current, instance.labels, config.lambda_
                    )
                except NumericsError as exc:
                    raise DivergenceError(step=t + 1, message=str(exc)) from exc
                g_q += d_wq
                g_k += d_wk
                sums += (breakdown.l_doc, breakdown.l_ins, breakdown.total)
            g_q /= len(batch)
            g_k /= len(batch)
            t += 1
            w_q = adam_q.step(w_q, g_q, t, config)
            w_k = adam_k.step(w_k, g_k, t, config)
            if not (np.all(np.isfinite(w_q)) and np.all(np.isfinite(w_k))):
                raise DivergenceError(step=t)
        means = sums / len(dataset)
        log.append(EpochStats(epoch=epoch, l_doc=means[0], l_ins=means[1], total=means[2]))
        if not math.isfinite(log[-1].total):
            raise DivergenceError(step=t, message=f"non-finite epoch loss at step {t}")

    return TrainResult(head=CrossAttentionHead(w_q=w_q, w_k=w_k), epoch_log=log)


def write_loss_log(path: str, log: list[EpochStats]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,l_doc,l_ins,total\n")
        for row in log:
            fh.write(f"{row.epoch},{row.l_doc:.10g},{row.l_ins:.10g},{row.total:.10g}\n")


def _total_loss(
    bundle: HiddenBundle, head: CrossAttentionHead, labels: tuple[int, ...], lambda_: float
) -> float:
    matrix, _ = forward(bundle, head)
    return loss(segment_scores(matrix, bundle.layout), labels, lambda_).total


def random_check_instance(seed: int) -> tuple[TrainingInstance, CrossAttentionHead]:
    """Small random instance for finite-difference verification."""
    from .synthetic import SyntheticSpec, generate_synthetic

    stream = PcgStream.derived(seed, "gradcheck")

    def pick(upper: int) -> int:
        return 1 + int(stream.integers(1, upper)[0])

    d_model = (4, 8)[pick(2) - 1]
    h = pick(2)
    d_a = pick(2)
    n_docs = pick(3)
    ins_tokens = pick(2)
    budget = 8 - ins_tokens
    doc_counts = []
    for d in range(n_docs):
        remaining_docs = n_docs - d - 1
        hi = max(1, budget - remaining_docs)
        tokens = min(pick(2), hi)
        doc_counts.append((f"d{d}", tokens))
        budget -= tokens
    rel = tuple(f"d{d}" for d in range(n_docs) if int(stream.integers(1, 2)[0]) == 1)
    spec = SyntheticSpec(
        d_model=d_model,
        relevant_direction_seed=seed,
        doc_token_counts=tuple(doc_counts),
        query_token_count=pick(3),
        instruction_token_count=ins_tokens,
        noise_scale=1.0,
        relevant_doc_ids=rel,
    )
    bundle, labels = generate_synthetic(spec, seed=seed)
    head = init_random(h, d_model, d_a, seed=seed)
    return TrainingInstance(bundle=bundle, labels=labels), head


def gradient_check(
    seeds: list[int], h_step: float = 1e-5, lambda_: float = 0.8, floor: float = 1e-5
) -> float:
    """Max relative error of analytic vs central-difference gradients.

    The relative error denominator is floored to avoid division blow-ups on
    near-zero entries; 50 seeded instances run in a few seconds.
    """
    worst = 0.0
    for seed in seeds:
        instance, head = random_check_instance(seed)
        d_wq, d_wk, _, _ = grad(instance.bundle, head, instance.labels, lambda_)
        for name, w, analytic in (("w_q", head.w_q, d_wq), ("w_k", head.w_k, d_wk)):
            fd = np.zeros_like(w)
            flat = w.reshape(-1)
            fd_flat = fd.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h_step
                up = _total_loss(instance.bundle, head, instance.labels, lambda_)
                flat[i] = orig - h_step
                down = _total_loss(instance.bundle, head, instance.labels, lambda_)
                flat[i] = orig
                fd_flat[i] = (up - down) / (2 * h_step)
            denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), floor)
            rel = np.abs(analytic - fd) / denom
            worst = max(worst, float(rel.max()))
    return worst
