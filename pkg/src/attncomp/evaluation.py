"""Batch scoring/compression driver with metrics and report files.

For each sample: provider -> segment scores -> top-p selection ->
(optional) answer generation -> metrics.  Per-record failures are recorded
and skipped; the run never aborts on one bad sample.  Reports are a
per-record JSONL plus an aggregate CSV; all timings use a monotonic clock
and are the only fields that differ between identically-seeded runs.
"""

from __future__ import annotations

import json
import os
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .annotation import GeneratorClient, MATCH_POLICIES, exact_match, normalize_answer
from .confidence import confidence as confidence_of
from .corpus import Granularity, QuerySample
from .errors import AttncompError
from .provider import SampleScorer
from .scoring import SegmentScores
from .topp import CompressionResult, TopPConfig, compress

TIMING_FIELDS = ("t_compress_s", "t_generate_s")


@dataclass(frozen=True)
class EvalRecord:
    id: str
    n_docs: int
    tokens_retrieved: int
    tokens_compressed: int
    kept: tuple[str, ...]
    selection_order: tuple[str, ...]
    unit_scores: tuple[tuple[str, float], ...]
    s_ins: float
    confidence: float
    cumulative_score: float
    predicted: str | None = None
    f1: float | None = None
    acc_contains: int | None = None
    acc_exact: int | None = None
    t_compress_s: float = 0.0
    t_generate_s: float = 0.0

    def __post_init__(self):
        if self.tokens_compressed > max(self.tokens_retrieved, 1):
            raise ValueError("compressed tokens exceed retrieved tokens")


@dataclass(frozen=True)
class RunConfig:
    provider_spec: str
    weights_dir: str | None = None
    granularity: Granularity = Granularity.DOCUMENT
    topp: TopPConfig = field(default_factory=TopPConfig)
    parallelism: int = 1
    seed: int = 0
    out_dir: str = "."
    acc_policy: str = "contains"

    def __post_init__(self):
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        if self.acc_policy not in MATCH_POLICIES:
            raise ValueError(f"unknown acc policy {self.acc_policy!r}")


@dataclass
class RunReport:
    records: list[EvalRecord]
    failures: list[tuple[str, str]]  # (sample id, reason)
    aggregate: dict

    @property
    def had_failures(self) -> bool:
        return bool(self.failures)


def compression_rate(records: list[EvalRecord]) -> float:
    """Total retrieved tokens over total compressed tokens.

    Records that filtered out every document contribute their floor of one
    token.  A zero compressed total (possible only with hand-built
    records) yields the infinity sentinel.
    """
    if not records:
        raise ValueError("no records")
    retrieved = sum(r.tokens_retrieved for r in records)
    compressed = sum(r.tokens_compressed for r in records)
    if compressed == 0:
        return float("inf")
    return retrieved / compressed


def token_f1(predicted: str, golds: list[str]) -> float:
    """Best token-overlap F1 against any gold, under answer normalization."""
    pred_tokens = normalize_answer(predicted).split()
    best = 0.0
    for gold in golds:
        gold_tokens = normalize_answer(gold).split()
        if not pred_tokens or not gold_tokens:
            best = max(best, 1.0 if pred_tokens == gold_tokens else 0.0)
            continue
        common = Counter(pred_tokens) & Counter(gold_tokens)
        overlap = sum(common.values())
        if overlap == 0:
            continue
        precision = overlap / len(pred_tokens)
        recall = overlap / len(gold_tokens)
        best = max(best, 2 * precision * recall / (precision + recall))
    return best


def _selection_tokens(layout, result: CompressionResult) -> int:
    kept = set(result.kept)
    return sum(s.length for s in layout.segment_spans if s.ident in kept)


def _evaluate_one(
    index: int,
    sample: QuerySample,
    scorer: SampleScorer,
    config: RunConfig,
    generator: GeneratorClient | None,
) -> EvalRecord:
    sample_id = f"q{index:05d}"
    t0 = time.perf_counter()
    scores, layout = scorer.result_for(index, sample, config.granularity)
    result = compress(scores, config.topp)
    t_compress = time.perf_counter() - t0

    tokens_retrieved = sum(s.length for s in layout.segment_spans)
    tokens_compressed = max(1, _selection_tokens(layout, result))

    predicted = None
    f1 = acc_c = acc_e = None
    t_generate = 0.0
    if generator is not None:
        kept_docs = [d for d in sample.documents if d.id in _kept_doc_ids(result, scores)]
        t1 = time.perf_counter()
        predicted = generator.generate(sample.query, kept_docs)
        t_generate = time.perf_counter() - t1
        golds = list(sample.gold_answers)
        f1 = token_f1(predicted, golds)
        acc_c = MATCH_POLICIES["contains"](predicted, golds)
        acc_e = exact_match(predicted, golds)

    return EvalRecord(
        id=sample_id,
        n_docs=len(sample.documents),
        tokens_retrieved=tokens_retrieved,
        tokens_compressed=tokens_compressed,
        kept=result.kept,
        selection_order=result.selection_order,
        unit_scores=scores.selection_units(),
        s_ins=scores.s_ins,
        confidence=confidence_of(scores),
        cumulative_score=result.cumulative_score,
        predicted=predicted,
        f1=f1,
        acc_contains=acc_c,
        acc_exact=acc_e,
        t_compress_s=t_compress,
        t_generate_s=t_generate,
    )


def _kept_doc_ids(result: CompressionResult, scores: SegmentScores) -> set[str]:
    """Document ids touched by the kept selection units (sentences roll up)."""
    if scores.sentence_scores is None:
        return set(result.kept)
    return {ident.split("::", 1)[0] for ident in result.kept}


def run_eval(
    samples: list[QuerySample],
    scorer: SampleScorer,
    config: RunConfig,
    generator: GeneratorClient | None = None,
) -> RunReport:
    if not samples:
        raise AttncompError("no samples in dataset")

    def job(pair):
        index, sample = pair
        try:
            return index, _evaluate_one(index, sample, scorer, config, generator), None
        except Exception as exc:
            return index, None, f"{type(exc).__name__}: {exc}"

    items = list(enumerate(samples))
    if config.parallelism > 1:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            outcomes = list(pool.map(job, items))
    else:
        outcomes = [job(item) for item in items]

    outcomes.sort(key=lambda t: t[0])
    records = [rec for _, rec, err in outcomes if err is None]
    failures = [(f"q{i:05d}", err) for i, _, err in outcomes if err is not None]
    aggregate = aggregate_metrics(records, config, len(samples), len(failures))
    return RunReport(records=records, failures=failures, aggregate=aggregate)


def aggregate_metrics(
    records: list[EvalRecord], config: RunConfig, total: int, failures: int
) -> dict:
    def mean_of(values):
        values = [v for v in values if v is not None]
        return sum(values) / len(values) if values else None

    rate = compression_rate(records) if records else None
    agg = {
        "samples": total,
        "evaluated": len(records),
        "failures": failures,
        "compression_rate": rate,
        "compression_rate_degenerate": rate is not None and rate == float("inf"),
        "mean_kept": mean_of([len(r.kept) for r in records]),
        "mean_confidence": mean_of([r.confidence for r in records]),
        "mean_f1": mean_of([r.f1 for r in records]),
        "mean_acc_contains": mean_of([r.acc_contains for r in records]),
        "mean_acc_exact": mean_of([r.acc_exact for r in records]),
        "acc_policy": config.acc_policy,
        "mean_t_compress_s": mean_of([r.t_compress_s for r in records]),
        "mean_t_generate_s": mean_of([r.t_generate_s for r in records]),
    }
    return agg


def record_to_json(record: EvalRecord, include_timings: bool = True) -> dict:
    obj = {
        "id": record.id,
        "n_docs": record.n_docs,
        "tokens_retrieved": record.tokens_retrieved,
        "tokens_compressed": record.tokens_compressed,
        "kept": list(record.kept),
        "selection_order": list(record.selection_order),
        "unit_scores": [[ident, value] for ident, value in record.unit_scores],
        "s_ins": record.s_ins,
        "confidence": record.confidence,
        "cumulative_score": record.cumulative_score,
        "predicted": record.predicted,
        "f1": record.f1,
        "acc_contains": record.acc_contains,
        "acc_exact": record.acc_exact,
    }
    if include_timings:
        obj["t_compress_s"] = record.t_compress_s
        obj["t_generate_s"] = record.t_generate_s
    return obj


def write_report(report: RunReport, out_dir: str) -> tuple[str, str]:
    """Write records.jsonl and aggregate.csv; returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    records_path = os.path.join(out_dir, "records.jsonl")
    with open(records_path, "w", encoding="utf-8") as fh:
        for record in report.records:
            fh.write(json.dumps(record_to_json(record), ensure_ascii=False) + "\n")
        for sample_id, reason in report.failures:
            fh.write(json.dumps({"id": sample_id, "error": reason}) + "\n")

    agg_path = os.path.join(out_dir, "aggregate.csv")
    keys = list(report.aggregate.keys())
    with open(agg_path, "w", encoding="utf-8") as fh:
        fh.write(",".join(keys) + "\n")
        fh.write(
            ",".join(
                "" if report.aggregate[k] is None else str(report.aggregate[k]) for k in keys
            )
            + "\n"
        )
    return records_path, agg_path


def strip_timings(records_path: str) -> list[dict]:
    """Parsed record rows with timing fields removed (determinism checks)."""
    rows = []
    with open(records_path, encoding="utf-8") as fh:
        for line in fh:
            obj = json.loads(line)
            for key in TIMING_FIELDS:
                obj.pop(key, None)
            rows.append(obj)
    return rows
