"""Seeded synthetic hidden states with planted relevance.

Relevance lives in hidden-state geometry: query rows and relevant-document
tokens share a latent direction u, the instruction carries its own
signature direction w (orthogonal to u), and irrelevant-document tokens
are unit noise orthogonalized against both.  The scoring head must then
learn to route attention to relevant tokens when they exist and to the
instruction when nothing matches, which exercises the full
forward -> scores -> top-p -> loss chain with known ground truth.

Every tensor is a pure function of (spec, seed): each entity (query,
instruction, document id) draws from its own derived PCG stream, so
document subsets and permutations reproduce identical rows.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .corpus import (
    INSTRUCTION_ID,
    Document,
    Granularity,
    PromptLayout,
    QuerySample,
    SegmentSpan,
    SpanKind,
)
from .head import HiddenBundle
from .rng import PcgStream


@dataclass(frozen=True)
class SyntheticSpec:
    """Construction recipe for one sample's hidden states.

    `amplitude` scales the planted directions relative to unit noise,
    mimicking the larger-than-noise norms of real hidden states; 1.0 gives
    the plain unit-vector construction.
    """

    d_model: int
    relevant_direction_seed: int
    doc_token_counts: tuple[tuple[str, int], ...]
    query_token_count: int = 4
    instruction_token_count: int = 4
    noise_scale: float = 0.25
    relevant_doc_ids: tuple[str, ...] = ()
    amplitude: float = 1.0
    sentence_chunk: int = 0  # >0: emit sentence spans of at most this size

    def __post_init__(self):
        if self.d_model < 4:
            raise ValueError("d_model must be at least 4")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be non-negative")
        ids = [d for d, _ in self.doc_token_counts]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate document ids")
        unknown = set(self.relevant_doc_ids) - set(ids)
        if unknown:
            raise ValueError(f"relevant ids not among documents: {sorted(unknown)}")


def planted_directions(spec: SyntheticSpec) -> tuple[np.ndarray, np.ndarray]:
    """Unit vectors (u, w): relevance direction and instruction signature.

    Both are dense sign vectors (+-1/sqrt(d)); w flips exactly half of u's
    signs, making the pair exactly orthogonal.  Dense directions spread the
    planted signal over every coordinate, which keeps the construction
    learnable by coordinate-wise optimizers within a small step budget.
    """
    if spec.d_model % 2:
        raise ValueError("d_model must be even")
    stream = PcgStream.derived(spec.relevant_direction_seed, "directions")
    scale = 1.0 / np.sqrt(spec.d_model)
    signs = np.where(stream.uniforms(spec.d_model) < 0.5, -1.0, 1.0)
    u = signs * scale
    flip = stream.shuffled(list(range(spec.d_model)))[: spec.d_model // 2]
    w = u.copy()
    w[flip] *= -1.0
    return u, w


def _orthogonal_unit_rows(stream: PcgStream, count: int, u: np.ndarray, w: np.ndarray) -> np.ndarray:
    rows = stream.gaussian_matrix(count, u.shape[0])
    rows -= np.outer(rows @ u, u)
    rows -= np.outer(rows @ w, w)
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return rows


def _planted_rows(
    stream: PcgStream, count: int, direction: np.ndarray, amplitude: float, sigma: float
) -> np.ndarray:
    rows = np.tile(amplitude * direction, (count, 1))
    if sigma > 0:
        rows += sigma * stream.gaussian_matrix(count, direction.shape[0])
    return rows


def _layout_for(spec: SyntheticSpec) -> PromptLayout:
    spans = [
        SegmentSpan(SpanKind.INSTRUCTION, INSTRUCTION_ID, 0, spec.instruction_token_count)
    ]
    cursor = spec.instruction_token_count
    granularity = Granularity.SENTENCE if spec.sentence_chunk > 0 else Granularity.DOCUMENT
    for doc_id, count in spec.doc_token_counts:
        if spec.sentence_chunk > 0:
            ordinal = 0
            remaining = count
            while remaining > 0:
                take = min(spec.sentence_chunk, remaining)
                spans.append(
                    SegmentSpan(SpanKind.SENTENCE, doc_id, cursor, cursor + take, ordinal)
                )
                cursor += take
                remaining -= take
                ordinal += 1
        else:
            spans.append(SegmentSpan(SpanKind.DOCUMENT, doc_id, cursor, cursor + count))
            cursor += count
    return PromptLayout(
        context_spans=tuple(spans),
        n=cursor,
        m=spec.query_token_count,
        granularity=granularity,
    )


def generate_synthetic(spec: SyntheticSpec, seed: int) -> tuple[HiddenBundle, tuple[int, ...]]:
    """Build hidden states and the aligned relevance labels for one sample."""
    u, w = planted_directions(spec)
    sigma = spec.noise_scale

    x_q = _planted_rows(
        PcgStream.derived(seed, "query"), spec.query_token_count, u, spec.amplitude, sigma
    )
    ins_stream = PcgStream.derived(seed, "instruction")
    x_ins = _planted_rows(ins_stream, spec.instruction_token_count, w, spec.amplitude, sigma)

    blocks = [x_ins]
    labels = []
    relevant = set(spec.relevant_doc_ids)
    for doc_id, count in spec.doc_token_counts:
        stream = PcgStream.derived(seed, "doc", doc_id)
        if doc_id in relevant:
            blocks.append(_planted_rows(stream, count, u, spec.amplitude, sigma))
            labels.append(1)
        else:
            blocks.append(_orthogonal_unit_rows(stream, count, u, w))
            labels.append(0)

    bundle = HiddenBundle(x_c=np.vstack(blocks), x_q=x_q, layout=_layout_for(spec))
    return bundle, tuple(labels)


def negative_synthetic(spec: SyntheticSpec, seed: int) -> tuple[HiddenBundle, tuple[int, ...]]:
    """All-irrelevant variant: every label is 0."""
    return generate_synthetic(replace(spec, relevant_doc_ids=()), seed)


def make_planted_instances(
    n_positive: int,
    n_negative: int,
    *,
    seed: int,
    d_model: int = 32,
    docs_per_sample: int = 6,
    doc_tokens: int = 2,
    instruction_tokens: int = 60,
    query_tokens: int = 6,
    noise_scale: float = 0.05,
    amplitude: float = 8.0,
    relevant_range: tuple[int, int] = (1, 4),
    direction_seed: int = 77,
) -> list[tuple[HiddenBundle, tuple[int, ...]]]:
    """Planted-relevance training corpus: positives first, then negatives.

    The default geometry (short uniform documents, a long instruction span,
    amplitude 8 against unit noise) is calibrated so that the head trains to
    full selection accuracy within a small fixed step budget; see the test
    suite for the acceptance experiment built on top of it.
    """
    out = []
    for i in range(n_positive + n_negative):
        stream = PcgStream.derived(seed, "build", i)
        is_negative = i >= n_positive
        counts = tuple((f"d{j:02d}", doc_tokens) for j in range(docs_per_sample))
        if is_negative:
            rel: tuple[str, ...] = ()
        else:
            lo, hi = relevant_range
            k = lo if hi <= lo else lo + int(stream.integers(1, hi - lo + 1)[0])
            rel = tuple(sorted(stream.shuffled([c[0] for c in counts])[:k]))
        spec = SyntheticSpec(
            d_model=d_model,
            relevant_direction_seed=direction_seed,
            doc_token_counts=counts,
            query_token_count=query_tokens,
            instruction_token_count=instruction_tokens,
            noise_scale=noise_scale,
            relevant_doc_ids=rel,
            amplitude=amplitude,
        )
        out.append(generate_synthetic(spec, seed=PcgStream.derived(seed, "s", i).seed))
    return out


def _doc_text(stream: PcgStream, tokens: int) -> str:
    words = [f"w{int(v)}" for v in stream.integers(tokens, 99999)]
    return " ".join(words)


def make_query_dataset(
    count: int,
    *,
    seed: int,
    docs_per_sample: int = 10,
    doc_tokens: tuple[int, int] = (3, 6),
    relevant_range: tuple[int, int] = (1, 4),
    negative_every: int = 4,
    query_tokens: int = 3,
) -> list[QuerySample]:
    """Labeled samples for desk-scale experiments.

    Every `negative_every`-th sample has no relevant documents, giving the
    3-positive : 1-negative mix at any scale (count=8000 yields 2000
    negatives).  Document texts are filler words matching the token counts.
    """
    samples = []
    for idx in range(count):
        stream = PcgStream.derived(seed, "dataset", idx)
        is_negative = negative_every > 0 and idx % negative_every == negative_every - 1
        n_rel = 0
        if not is_negative:
            lo, hi = relevant_range
            n_rel = lo + int(stream.integers(1, hi - lo + 1)[0])
        rel_positions = set(stream.shuffled(list(range(docs_per_sample)))[:n_rel])
        docs = []
        labels = []
        for d in range(docs_per_sample):
            tokens = doc_tokens[0] + int(
                stream.integers(1, doc_tokens[1] - doc_tokens[0] + 1)[0]
            )
            text = _doc_text(stream, tokens)
            docs.append(Document(id=f"q{idx:05d}-d{d:02d}", title=f"doc {d}", text=text,
                                 token_count=tokens))
            labels.append(1 if d in rel_positions else 0)
        query_text = " ".join([f"query{idx}"] + [f"t{k}" for k in range(query_tokens - 1)])
        samples.append(
            QuerySample(
                query=query_text,
                gold_answers=(f"answer {idx}",),
                documents=tuple(docs),
                relevance_labels=tuple(labels),
            )
        )
    return samples


def make_oracle_generator(samples: list[QuerySample]):
    """Answer generator that knows the planted truth.

    Returns the gold answer iff the documents it is shown include every
    relevant document of the query's sample; otherwise answers "unknown".
    Negative samples therefore never receive a correct answer.
    """
    truth = {}
    for s in samples:
        labels = s.relevance_labels or tuple(0 for _ in s.documents)
        relevant = {d.id for d, r in zip(s.documents, labels) if r == 1}
        truth[s.query] = (relevant, s.gold_answers[0] if s.gold_answers else "")

    def generate(query: str, documents: list[Document]) -> str:
        if query not in truth:
            return "unknown"
        relevant, answer = truth[query]
        shown = {d.id for d in documents}
        if relevant and relevant.issubset(shown):
            return answer
        return "unknown"

    return generate
