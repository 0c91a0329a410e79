import numpy as np
import pytest

from attncomp.bundles import save_hidden_bundle, write_bundle
from attncomp.corpus import Granularity, QuerySample, Document
from attncomp.errors import AttncompError, BundleFormatError
from attncomp.head import init_random
from attncomp.provider import (
    BundleProvider,
    SampleScorer,
    SyntheticParams,
    SyntheticProvider,
    parse_provider,
)
from attncomp.synthetic import make_query_dataset


def sample():
    return QuerySample(
        query="what is it",
        gold_answers=("it",),
        documents=(
            Document(id="a", title="", text="x y z", token_count=3),
            Document(id="b", title="", text="p q", token_count=2),
        ),
        relevance_labels=(1, 0),
    )


class TestParseProvider:
    def test_synthetic_with_params(self):
        provider = parse_provider("synthetic:d_model=16,sigma=0.1,amplitude=2", seed=5)
        assert isinstance(provider, SyntheticProvider)
        assert provider.params.d_model == 16
        assert provider.params.noise_scale == 0.1
        assert provider.params.amplitude == 2.0

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown synthetic parameter"):
            parse_provider("synthetic:volume=11", seed=0)

    def test_bundle_requires_dir(self):
        with pytest.raises(ValueError, match="needs a directory"):
            parse_provider("bundle:", seed=0)

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown provider kind"):
            parse_provider("quantum:foo", seed=0)


class TestSyntheticProvider:
    def test_layout_follows_sample_documents(self):
        provider = SyntheticProvider(SyntheticParams(d_model=16, instruction_tokens=3), seed=1)
        result = provider.get(0, sample(), Granularity.DOCUMENT)
        assert result.layout.document_ids() == ["a", "b"]
        assert result.layout.doc_token_counts() == {"a": 3, "b": 2}
        assert result.labels == (1, 0)

    def test_subset_scoring_consistent(self):
        provider = SyntheticProvider(SyntheticParams(d_model=16), seed=1)
        full = provider.get(0, sample(), Granularity.DOCUMENT)
        sub = provider.get(0, sample(), Granularity.DOCUMENT, doc_ids=["b"])
        full_span = {s.owner_id: s for s in full.layout.segment_spans}["b"]
        sub_span = {s.owner_id: s for s in sub.layout.segment_spans}["b"]
        a = full.hidden.x_c[full_span.start : full_span.end]
        b = sub.hidden.x_c[sub_span.start : sub_span.end]
        assert np.array_equal(a, b)

    def test_seed_changes_states(self):
        p1 = SyntheticProvider(SyntheticParams(d_model=16), seed=1)
        p2 = SyntheticProvider(SyntheticParams(d_model=16), seed=2)
        a = p1.get(0, sample(), Granularity.DOCUMENT).hidden.x_q
        b = p2.get(0, sample(), Granularity.DOCUMENT).hidden.x_q
        assert not np.array_equal(a, b)


class TestBundleProvider:
    def test_hidden_bundle_round_trip(self, tmp_path):
        provider = SyntheticProvider(SyntheticParams(d_model=8), seed=3)
        result = provider.get(0, sample(), Granularity.DOCUMENT)
        save_hidden_bundle(str(tmp_path / "sample_00000"), result.hidden)
        bundle_provider = BundleProvider(str(tmp_path))
        loaded = bundle_provider.get(0, sample(), Granularity.DOCUMENT)
        assert loaded.hidden is not None
        assert loaded.layout.document_ids() == ["a", "b"]
        # f32 interchange keeps values to float32 precision
        assert loaded.hidden.x_c == pytest.approx(result.hidden.x_c, abs=1e-6)

    def test_raw_attention_bundle(self, tmp_path):
        stack = np.full((2, 1, 5), 1 / 5)
        spans = [
            {"kind": "instruction", "owner": "__instruction__", "start": 0, "end": 2},
            {"kind": "document", "owner": "a", "start": 2, "end": 5},
        ]
        write_bundle(
            str(tmp_path / "sample_00000"),
            m=1, n=5, d_model=0, h=2, d_a=0,
            tensors={"attention": stack}, spans=spans,
        )
        provider = BundleProvider(str(tmp_path))
        result = provider.get(0, sample(), Granularity.DOCUMENT)
        assert result.attention is not None
        with pytest.raises(AttncompError, match="cannot rescore"):
            provider.get(0, sample(), Granularity.DOCUMENT, doc_ids=["a"])

    def test_missing_sample_dir(self, tmp_path):
        provider = BundleProvider(str(tmp_path))
        with pytest.raises(BundleFormatError, match="missing bundle"):
            provider.get(0, sample(), Granularity.DOCUMENT)

    def test_missing_root_rejected(self, tmp_path):
        with pytest.raises(BundleFormatError, match="not found"):
            BundleProvider(str(tmp_path / "nope"))


class TestSampleScorer:
    def test_hidden_provider_requires_head(self):
        provider = SyntheticProvider(SyntheticParams(d_model=16), seed=1)
        scorer = SampleScorer(provider, head=None)
        with pytest.raises(AttncompError, match="requires head weights"):
            scorer.scores_for(0, sample())

    def test_scores_sum_to_one(self):
        provider = SyntheticProvider(SyntheticParams(d_model=16), seed=1)
        scorer = SampleScorer(provider, init_random(2, 16, 8, seed=0))
        scores = scorer.scores_for(0, sample())
        assert scores.total == pytest.approx(1.0, abs=1e-9)

    def test_subset_scores(self):
        samples = make_query_dataset(3, seed=4, docs_per_sample=4)
        provider = SyntheticProvider(SyntheticParams(d_model=16), seed=1)
        scorer = SampleScorer(provider, init_random(2, 16, 8, seed=0))
        ids = [d.id for d in samples[0].documents][:2]
        scores = scorer.scores_for(0, samples[0], doc_ids=ids)
        assert [d for d, _ in scores.doc_scores] == ids
