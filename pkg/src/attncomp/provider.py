"""Attention/hidden-state providers and the sample scorer built on them.

Two backends sit behind one interface: bit-exact file bundles (one bundle
directory per dataset sample, named sample_00000, sample_00001, ...) and
the seeded synthetic generator.  A provider yields, per sample, either a
ready attention matrix or a hidden-state bundle to run the scoring head
over; the scorer turns either into segment scores and can rescore document
subsets, which the annotation pipeline and per-epoch shuffling rely on.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from enum import Enum

from .bundles import load_bundle
from .corpus import Granularity, PromptLayout, QuerySample, fallback_token_count
from .errors import AttncompError, BundleFormatError
from .head import CrossAttentionHead, HiddenBundle, forward, reorder_documents
from .rng import mix_seed
from .scoring import AttentionMatrix, SegmentScores, mean_over_heads, segment_scores
from .synthetic import SyntheticSpec, generate_synthetic


class ProviderMode(str, Enum):
    RAW_ATTENTION = "raw_attention"
    HIDDEN_STATES = "hidden_states"


@dataclass(frozen=True)
class ProviderResult:
    layout: PromptLayout
    attention: AttentionMatrix | None = None
    hidden: HiddenBundle | None = None
    labels: tuple[int, ...] | None = None

    @property
    def mode(self) -> ProviderMode:
        return ProviderMode.HIDDEN_STATES if self.hidden is not None else ProviderMode.RAW_ATTENTION


@dataclass(frozen=True)
class SyntheticParams:
    """Dataset-level knobs for the synthetic backend (per-sample specs
    derive from these plus each sample's documents and labels)."""

    d_model: int = 32
    noise_scale: float = 0.25
    amplitude: float = 1.0
    relevant_direction_seed: int = 77
    instruction_tokens: int = 4
    sentence_chunk: int = 4  # used only at sentence granularity


class SyntheticProvider:
    """Generates hidden states for any sample, subset, or permutation.

    Per-sample seeds derive from (master seed, query text), and per-entity
    streams from document ids, so rescoring a document subset reproduces
    the same rows the full prompt had.
    """

    def __init__(self, params: SyntheticParams, seed: int):
        self.params = params
        self.seed = seed

    def spec_for(
        self, sample: QuerySample, granularity: Granularity, doc_ids: list[str] | None = None
    ) -> SyntheticSpec:
        docs = {d.id: d for d in sample.documents}
        order = list(docs) if doc_ids is None else list(doc_ids)
        labels = sample.relevance_labels or tuple(0 for _ in sample.documents)
        relevant = {d.id for d, r in zip(sample.documents, labels) if r == 1}
        return SyntheticSpec(
            d_model=self.params.d_model,
            relevant_direction_seed=self.params.relevant_direction_seed,
            doc_token_counts=tuple((i, docs[i].token_count) for i in order),
            query_token_count=fallback_token_count(sample.query),
            instruction_token_count=self.params.instruction_tokens,
            noise_scale=self.params.noise_scale,
            relevant_doc_ids=tuple(i for i in order if i in relevant),
            amplitude=self.params.amplitude,
            sentence_chunk=(
                self.params.sentence_chunk if granularity is Granularity.SENTENCE else 0
            ),
        )

    def get(
        self,
        index: int,
        sample: QuerySample,
        granularity: Granularity,
        doc_ids: list[str] | None = None,
    ) -> ProviderResult:
        spec = self.spec_for(sample, granularity, doc_ids)
        bundle, labels = generate_synthetic(spec, seed=mix_seed(self.seed, sample.query))
        return ProviderResult(layout=bundle.layout, hidden=bundle, labels=labels)


class BundleProvider:
    """Loads per-sample bundle directories exported by an instrumented model."""

    def __init__(self, root: str):
        if not os.path.isdir(root):
            raise BundleFormatError(f"bundle directory not found: {root}")
        self.root = root

    def _sample_path(self, index: int) -> str:
        path = os.path.join(self.root, f"sample_{index:05d}")
        if not os.path.isdir(path):
            raise BundleFormatError(f"missing bundle for sample {index}: {path}")
        return path

    def get(
        self,
        index: int,
        sample: QuerySample,
        granularity: Granularity,
        doc_ids: list[str] | None = None,
    ) -> ProviderResult:
        bundle = load_bundle(self._sample_path(index))
        if "x_c" in bundle.tensors:
            hidden = bundle.hidden_bundle()
            if doc_ids is not None:
                hidden = reorder_documents(hidden, doc_ids)
            return ProviderResult(layout=hidden.layout, hidden=hidden)
        stack = bundle.head_stack()
        if doc_ids is not None:
            raise AttncompError(
                "raw-attention bundles cannot rescore document subsets; "
                "export hidden states instead"
            )
        return ProviderResult(layout=bundle.layout(), attention=mean_over_heads(stack))


def parse_provider(spec: str, seed: int):
    """Build a provider from a CLI spec string.

    `bundle:DIR` loads exported bundles; `synthetic:key=value,...` builds
    the synthetic backend (keys: d_model, sigma, amplitude, direction_seed,
    instruction_tokens, sentence_chunk).
    """
    kind, _, rest = spec.partition(":")
    if kind == "bundle":
        if not rest:
            raise ValueError("bundle provider needs a directory: bundle:DIR")
        return BundleProvider(rest)
    if kind == "synthetic":
        keys = {
            "d_model": int,
            "sigma": float,
            "amplitude": float,
            "direction_seed": int,
            "instruction_tokens": int,
            "sentence_chunk": int,
        }
        rename = {"sigma": "noise_scale", "direction_seed": "relevant_direction_seed"}
        kwargs = {}
        if rest:
            for item in rest.split(","):
                key, _, value = item.partition("=")
                key = key.strip()
                if key not in keys:
                    raise ValueError(f"unknown synthetic parameter {key!r}")
                kwargs[rename.get(key, key)] = keys[key](value)
        return SyntheticProvider(SyntheticParams(**kwargs), seed=seed)
    raise ValueError(f"unknown provider kind {kind!r} (use bundle: or synthetic:)")


class SampleScorer:
    """Segment scores for samples (or their document subsets).

    Hidden-state results run through the cross-attention head; raw
    attention bundles are scored directly (the head is not consulted).
    """

    def __init__(self, provider, head: CrossAttentionHead | None = None):
        self.provider = provider
        self.head = head

    def result_for(
        self,
        index: int,
        sample: QuerySample,
        granularity: Granularity,
        doc_ids: list[str] | None = None,
    ) -> tuple[SegmentScores, PromptLayout]:
        result = self.provider.get(index, sample, granularity, doc_ids)
        if result.hidden is not None:
            if self.head is None:
                raise AttncompError(
                    "hidden-state provider requires head weights (pass --weights "
                    "or train a head first)"
                )
            matrix, _ = forward(result.hidden, self.head)
        else:
            matrix = result.attention
        return segment_scores(matrix, result.layout), result.layout

    def scores_for(
        self,
        index: int,
        sample: QuerySample,
        granularity: Granularity = Granularity.DOCUMENT,
        doc_ids: list[str] | None = None,
    ) -> SegmentScores:
        scores, _ = self.result_for(index, sample, granularity, doc_ids)
        return scores
