import json

import numpy as np
import pytest

from attncomp.bundles import (
    load_bundle,
    load_head,
    save_head,
    save_hidden_bundle,
    spans_to_table,
    write_bundle,
)
from attncomp.errors import BundleFormatError, ChecksumError
from attncomp.head import init_random
from attncomp.synthetic import SyntheticSpec, generate_synthetic


def sample_hidden(tmp_path, name="b0"):
    spec = SyntheticSpec(
        d_model=8,
        relevant_direction_seed=1,
        doc_token_counts=(("d1", 2), ("d2", 3)),
        query_token_count=2,
        instruction_token_count=2,
        relevant_doc_ids=("d1",),
    )
    bundle, _ = generate_synthetic(spec, seed=4)
    path = str(tmp_path / name)
    save_hidden_bundle(path, bundle, tokenizer="whitespace")
    return path, bundle


class TestRoundTrip:
    def test_hidden_bundle_payload_bits_stable(self, tmp_path):
        path, original = sample_hidden(tmp_path)
        loaded = load_bundle(path)
        resaved = str(tmp_path / "again")
        save_hidden_bundle(resaved, loaded.hidden_bundle(), tokenizer="whitespace")
        for name in ("x_c", "x_q"):
            first = (tmp_path / "b0" / f"{name}.bin").read_bytes()
            second = (tmp_path / "again" / f"{name}.bin").read_bytes()
            assert first == second

    def test_layout_reconstruction(self, tmp_path):
        path, original = sample_hidden(tmp_path)
        layout = load_bundle(path).layout()
        assert layout.n == original.layout.n
        assert layout.m == original.layout.m
        assert [s.owner_id for s in layout.context_spans] == [
            s.owner_id for s in original.layout.context_spans
        ]

    def test_head_round_trip_bit_exact(self, tmp_path):
        head = init_random(3, 8, 4, seed=9)
        path = str(tmp_path / "head")
        save_head(path, head, source_layer=13, head_indices=[1, 5, 9])
        loaded = load_head(path)
        assert np.array_equal(loaded.w_q, head.w_q)
        assert np.array_equal(loaded.w_k, head.w_k)
        manifest = json.loads((tmp_path / "head" / "manifest.json").read_text())
        assert manifest["source_layer"] == 13
        assert manifest["head_indices"] == [1, 5, 9]


class TestValidation:
    def test_dim_payload_mismatch_rejected(self, tmp_path):
        path, _ = sample_hidden(tmp_path)
        manifest_path = tmp_path / "b0" / "manifest.json"
        manifest = json.loads(manifest_path.read_text())
        manifest["n"] = manifest["n"] + 1
        manifest["spans"][-1]["end"] += 1
        manifest["tensors"]["x_c"]["dims"][0] += 1
        manifest_path.write_text(json.dumps(manifest))
        with pytest.raises(BundleFormatError, match="bytes"):
            load_bundle(path)

    def test_span_gap_rejected_citing_range(self, tmp_path):
        path, _ = sample_hidden(tmp_path)
        manifest_path = tmp_path / "b0" / "manifest.json"
        manifest = json.loads(manifest_path.read_text())
        manifest["spans"][1]["start"] += 1  # open a hole after the instruction
        manifest_path.write_text(json.dumps(manifest))
        with pytest.raises(BundleFormatError, match=r"gap over tokens \[2, 3\)"):
            load_bundle(path)

    def test_truncated_payload_rejected(self, tmp_path):
        path, _ = sample_hidden(tmp_path)
        payload = tmp_path / "b0" / "x_q.bin"
        payload.write_bytes(payload.read_bytes()[:-4])
        with pytest.raises(BundleFormatError):
            load_bundle(path)

    def test_corrupted_payload_fails_checksum(self, tmp_path):
        path, _ = sample_hidden(tmp_path)
        payload = tmp_path / "b0" / "x_q.bin"
        data = bytearray(payload.read_bytes())
        data[0] ^= 0xFF
        payload.write_bytes(bytes(data))
        with pytest.raises(ChecksumError, match="checksum"):
            load_bundle(path)

    def test_unknown_dtype_rejected(self, tmp_path):
        path, _ = sample_hidden(tmp_path)
        manifest_path = tmp_path / "b0" / "manifest.json"
        manifest = json.loads(manifest_path.read_text())
        manifest["dtype"] = "f16"
        manifest_path.write_text(json.dumps(manifest))
        with pytest.raises(BundleFormatError, match="unknown dtype"):
            load_bundle(path)

    def test_missing_manifest_rejected(self, tmp_path):
        with pytest.raises(BundleFormatError, match="missing manifest.json"):
            load_bundle(str(tmp_path / "nope"))

    def test_wrong_kind_accessors(self, tmp_path):
        path, _ = sample_hidden(tmp_path)
        bundle = load_bundle(path)
        with pytest.raises(BundleFormatError, match="not a head-weight bundle"):
            bundle.head()
        with pytest.raises(BundleFormatError, match="not an attention bundle"):
            bundle.head_stack()


class TestAttentionBundles:
    def test_attention_stack_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        stack = rng.random((3, 2, 5))
        stack /= stack.sum(axis=2, keepdims=True)
        spans = [
            {"kind": "instruction", "owner": "__instruction__", "start": 0, "end": 2},
            {"kind": "document", "owner": "d1", "start": 2, "end": 5},
        ]
        path = str(tmp_path / "attn")
        write_bundle(
            path, m=2, n=5, d_model=0, h=3, d_a=0,
            tensors={"attention": stack}, spans=spans, tokenizer="t",
        )
        loaded = load_bundle(path)
        got = loaded.head_stack()
        assert got.h == 3
        assert got.as_array() == pytest.approx(stack, abs=1e-7)
