"""On-disk tensor bundle format.

A bundle is a directory holding `manifest.json` plus one raw payload file
per tensor (row-major, little-endian floats).  The manifest records dims,
dtype, a 64-bit FNV-1a checksum per payload, the context span table, and
provenance fields.  Fixed manifest schema:

    {"m": int, "n": int, "d_model": int, "H": int, "d_a": int,
     "dtype": "f32",
     "tensors": {name: {"dims": [...], "file": str, "fnv1a64": hex}},
     "spans": [{"kind": str, "owner": str, "start": int, "end": int}],
     "tokenizer": str, "source_layer": int, "head_indices": [int]}

Known tensor names: `x_c`/`x_q` (hidden-state bundles), `attention`
(per-head stack, dims [H, m, n]) and `w_q`/`w_k` (head weights,
dims [H, d_model, d_a]).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .corpus import Granularity, PromptLayout, SegmentSpan, SpanKind
from .errors import BundleFormatError, ChecksumError
from .head import CrossAttentionHead, HiddenBundle
from .scoring import AttentionMatrix, HeadStack

MANIFEST_NAME = "manifest.json"

_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


@dataclass(frozen=True)
class BundleManifest:
    m: int
    n: int
    d_model: int
    h: int
    d_a: int
    dtype: str
    tensors: dict[str, dict]
    spans: tuple[dict, ...]
    tokenizer: str = ""
    source_layer: int = -1
    head_indices: tuple[int, ...] = ()


@dataclass(frozen=True)
class Bundle:
    path: str
    manifest: BundleManifest
    tensors: dict[str, np.ndarray] = field(repr=False)

    def layout(self) -> PromptLayout:
        """PromptLayout reconstructed from the manifest span table."""
        spans = []
        ordinals: dict[str, int] = {}
        granularity = Granularity.DOCUMENT
        for raw in self.manifest.spans:
            kind = SpanKind(raw["kind"])
            owner = raw["owner"]
            ordinal = 0
            if kind is SpanKind.SENTENCE:
                granularity = Granularity.SENTENCE
                ordinal = ordinals.get(owner, 0)
                ordinals[owner] = ordinal + 1
            spans.append(SegmentSpan(kind, owner, raw["start"], raw["end"], ordinal))
        return PromptLayout(
            context_spans=tuple(spans),
            n=self.manifest.n,
            m=self.manifest.m,
            granularity=granularity,
        )

    def hidden_bundle(self) -> HiddenBundle:
        if "x_c" not in self.tensors or "x_q" not in self.tensors:
            raise BundleFormatError(f"{self.path}: not a hidden-state bundle")
        return HiddenBundle(
            x_c=self.tensors["x_c"], x_q=self.tensors["x_q"], layout=self.layout()
        )

    def head_stack(self) -> HeadStack:
        if "attention" not in self.tensors:
            raise BundleFormatError(f"{self.path}: not an attention bundle")
        stack = self.tensors["attention"]
        return HeadStack(tuple(AttentionMatrix(stack[i]) for i in range(stack.shape[0])))

    def head(self) -> CrossAttentionHead:
        if "w_q" not in self.tensors or "w_k" not in self.tensors:
            raise BundleFormatError(f"{self.path}: not a head-weight bundle")
        return CrossAttentionHead(w_q=self.tensors["w_q"], w_k=self.tensors["w_k"])


def _expected_dims(manifest: BundleManifest, name: str) -> list[int] | None:
    m, n = manifest.m, manifest.n
    h, dm, da = manifest.h, manifest.d_model, manifest.d_a
    return {
        "x_c": [n, dm],
        "x_q": [m, dm],
        "attention": [h, m, n],
        "w_q": [h, dm, da],
        "w_k": [h, dm, da],
    }.get(name)


def _validate_spans(manifest: BundleManifest, path: str) -> None:
    cursor = 0
    for raw in manifest.spans:
        for key in ("kind", "owner", "start", "end"):
            if key not in raw:
                raise BundleFormatError(f"{path}: span missing field {key!r}")
        if raw["kind"] not in (k.value for k in SpanKind):
            raise BundleFormatError(f"{path}: unknown span kind {raw['kind']!r}")
        if raw["start"] != cursor:
            raise BundleFormatError(
                f"{path}: span table gap over tokens [{cursor}, {raw['start']})"
            )
        if raw["end"] <= raw["start"]:
            raise BundleFormatError(f"{path}: empty span at token {raw['start']}")
        cursor = raw["end"]
    if cursor != manifest.n:
        raise BundleFormatError(
            f"{path}: span table gap over tokens [{cursor}, {manifest.n})"
        )


def load_bundle(path: str) -> Bundle:
    """Read and fully validate a bundle directory.

    Dimension bookkeeping, span partition, payload byte lengths and
    checksums are all verified before any tensor is exposed.
    """
    manifest_path = os.path.join(path, MANIFEST_NAME)
    try:
        with open(manifest_path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise BundleFormatError(f"{path}: missing {MANIFEST_NAME}") from exc
    except json.JSONDecodeError as exc:
        raise BundleFormatError(f"{path}: manifest is not valid JSON: {exc}") from exc

    try:
        manifest = BundleManifest(
            m=int(raw["m"]),
            n=int(raw["n"]),
            d_model=int(raw["d_model"]),
            h=int(raw["H"]),
            d_a=int(raw["d_a"]),
            dtype=str(raw["dtype"]),
            tensors=dict(raw["tensors"]),
            spans=tuple(raw.get("spans", [])),
            tokenizer=str(raw.get("tokenizer", "")),
            source_layer=int(raw.get("source_layer", -1)),
            head_indices=tuple(raw.get("head_indices", [])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise BundleFormatError(f"{path}: malformed manifest: {exc}") from exc

    if manifest.dtype not in _DTYPES:
        raise BundleFormatError(f"{path}: unknown dtype {manifest.dtype!r}")
    dtype = _DTYPES[manifest.dtype]
    _validate_spans(manifest, path)

    tensors: dict[str, np.ndarray] = {}
    for name, meta in manifest.tensors.items():
        try:
            dims = [int(d) for d in meta["dims"]]
            file_name = meta["file"]
            recorded = int(meta["fnv1a64"], 16)
        except (KeyError, TypeError, ValueError) as exc:
            raise BundleFormatError(f"{path}: bad tensor entry {name!r}: {exc}") from exc
        expected = _expected_dims(manifest, name)
        if expected is not None and dims != expected:
            raise BundleFormatError(
                f"{path}: tensor {name!r} dims {dims} inconsistent with manifest "
                f"header (expected {expected})"
            )
        payload_path = os.path.join(path, file_name)
        try:
            with open(payload_path, "rb") as fh:
                data = fh.read()
        except FileNotFoundError as exc:
            raise BundleFormatError(f"{path}: missing payload {file_name!r}") from exc
        expected_bytes = int(np.prod(dims)) * dtype.itemsize
        if len(data) != expected_bytes:
            raise BundleFormatError(
                f"{path}: tensor {name!r} payload is {len(data)} bytes, "
                f"expected {expected_bytes}"
            )
        actual = _kernels.fnv1a64(data)
        if actual != recorded:
            raise ChecksumError(
                f"{path}: tensor {name!r} checksum {actual:016x} != recorded {recorded:016x}"
            )
        tensors[name] = (
            np.frombuffer(data, dtype=dtype).reshape(dims).astype(np.float64)
        )
    return Bundle(path=path, manifest=manifest, tensors=tensors)


def write_bundle(
    path: str,
    *,
    m: int,
    n: int,
    d_model: int,
    h: int,
    d_a: int,
    tensors: dict[str, np.ndarray],
    spans: list[dict] | None = None,
    tokenizer: str = "",
    source_layer: int = -1,
    head_indices: list[int] | None = None,
    dtype: str = "f32",
) -> None:
    """Write a bundle directory; payloads are cast to the interchange dtype."""
    if dtype not in _DTYPES:
        raise BundleFormatError(f"unknown dtype {dtype!r}")
    np_dtype = _DTYPES[dtype]
    os.makedirs(path, exist_ok=True)
    tensor_meta = {}
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype=np_dtype).tobytes()
        file_name = f"{name}.bin"
        with open(os.path.join(path, file_name), "wb") as fh:
            fh.write(data)
        tensor_meta[name] = {
            "dims": list(arr.shape),
            "file": file_name,
            "fnv1a64": f"{_kernels.fnv1a64(data):016x}",
        }
    manifest = {
        "m": m,
        "n": n,
        "d_model": d_model,
        "H": h,
        "d_a": d_a,
        "dtype": dtype,
        "tensors": tensor_meta,
        "spans": spans or [],
        "tokenizer": tokenizer,
        "source_layer": source_layer,
        "head_indices": head_indices or [],
    }
    with open(os.path.join(path, MANIFEST_NAME), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def spans_to_table(layout: PromptLayout) -> list[dict]:
    return [
        {"kind": s.kind.value, "owner": s.owner_id, "start": s.start, "end": s.end}
        for s in layout.context_spans
    ]


def save_hidden_bundle(path: str, bundle: HiddenBundle, tokenizer: str = "") -> None:
    write_bundle(
        path,
        m=bundle.layout.m,
        n=bundle.layout.n,
        d_model=bundle.d_model,
        h=0,
        d_a=0,
        tensors={"x_c": bundle.x_c, "x_q": bundle.x_q},
        spans=spans_to_table(bundle.layout),
        tokenizer=tokenizer,
    )


def save_head(
    path: str,
    head: CrossAttentionHead,
    source_layer: int = -1,
    head_indices: list[int] | None = None,
) -> None:
    """Write head weights in the 32-bit interchange format."""
    write_bundle(
        path,
        m=0,
        n=0,
        d_model=head.d_model,
        h=head.h,
        d_a=head.d_a,
        tensors={"w_q": head.w_q, "w_k": head.w_k},
        source_layer=source_layer,
        head_indices=head_indices,
    )


def load_head(path: str) -> CrossAttentionHead:
    return load_bundle(path).head()
