"""Automatic relevance labeling via iterated compression and verification.

Labeling runs N shuffled rounds; inside each round, top-p compression is
re-applied to its own output until the retained count stops shrinking.
Documents kept in every round form the candidate relevant set, which an
answer generator then verifies: correct on the candidates alone yields a
positive sample; wrong on the candidates but also wrong on the full set
yields an all-irrelevant negative (with the candidates replaced by random
corpus documents); correct only on the full set discards the sample.
"""

from __future__ import annotations

import json
import re
import socket
import string
import threading
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

from .corpus import Document, Granularity, QuerySample
from .errors import FixpointError, GeneratorError
from .rng import PcgStream
from .scoring import SegmentScores
from .topp import TopPConfig, compress

_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_answer(text: str) -> str:
    """Lowercase, strip punctuation and articles, collapse whitespace."""
    text = text.lower().translate(_PUNCT_TABLE)
    text = _ARTICLE_RE.sub(" ", text)
    return " ".join(text.split())


def normalize_and_match(predicted: str, golds: Sequence[str]) -> int:
    """1 iff any normalized gold answer is contained in the prediction."""
    pred = normalize_answer(predicted)
    for gold in golds:
        g = normalize_answer(gold)
        if g and g in pred:
            return 1
    return 0


def exact_match(predicted: str, golds: Sequence[str]) -> int:
    """1 iff the normalized prediction equals a normalized gold answer."""
    pred = normalize_answer(predicted)
    return 1 if any(pred == normalize_answer(g) and pred for g in golds) else 0


MATCH_POLICIES: dict[str, Callable[[str, Sequence[str]], int]] = {
    "contains": normalize_and_match,
    "exact": exact_match,
}


class GeneratorClient(Protocol):
    def generate(self, query: str, documents: Sequence[Document]) -> str: ...


class CallbackGenerator:
    """In-process generator for tests and oracle experiments."""

    def __init__(self, fn: Callable[[str, list[Document]], str]):
        self._fn = fn

    def generate(self, query: str, documents: Sequence[Document]) -> str:
        try:
            return self._fn(query, list(documents))
        except Exception as exc:
            raise GeneratorError(f"generator callback failed: {exc}") from exc


class LineProtocolGenerator:
    """Newline-delimited JSON client.

    Request:  {"query": str, "documents": [{"title": str, "text": str}]}
    Response: {"answer": str}
    One JSON object per line, UTF-8.
    """

    def __init__(self, host: str, port: int, timeout: float = 30.0):
        self.host = host
        self.port = port
        self.timeout = timeout
        self._lock = threading.Lock()
        self._sock: socket.socket | None = None
        self._reader = None

    def _connect(self):
        self._sock = socket.create_connection((self.host, self.port), timeout=self.timeout)
        self._reader = self._sock.makefile("r", encoding="utf-8")

    def _close_locked(self):
        if self._sock is not None:
            self._sock.close()
            self._sock = None
            self._reader = None

    def close(self):
        with self._lock:
            self._close_locked()

    def generate(self, query: str, documents: Sequence[Document]) -> str:
        request = json.dumps(
            {
                "query": query,
                "documents": [{"title": d.title, "text": d.text} for d in documents],
            },
            ensure_ascii=False,
        )
        with self._lock:
            try:
                if self._sock is None:
                    self._connect()
                self._sock.sendall(request.encode("utf-8") + b"\n")
                line = self._reader.readline()
            except OSError as exc:
                self._close_locked()
                raise GeneratorError(f"generator connection failed: {exc}") from exc
            if not line:
                self._close_locked()
                raise GeneratorError("generator closed the connection")
        try:
            return str(json.loads(line)["answer"])
        except (json.JSONDecodeError, KeyError) as exc:
            raise GeneratorError(f"malformed generator response: {line!r}") from exc


class RecordingGenerator:
    """Wraps a client and appends request/answer pairs to a JSONL log,
    giving non-deterministic generators a replayable trace."""

    def __init__(self, inner: GeneratorClient, log_path: str):
        self._inner = inner
        self._path = log_path
        self._lock = threading.Lock()

    def generate(self, query: str, documents: Sequence[Document]) -> str:
        answer = self._inner.generate(query, documents)
        row = json.dumps(
            {"query": query, "document_ids": [d.id for d in documents], "answer": answer},
            ensure_ascii=False,
        )
        with self._lock, open(self._path, "a", encoding="utf-8") as fh:
            fh.write(row + "\n")
        return answer


def parse_generator(spec: str) -> GeneratorClient:
    """CLI generator address: tcp:HOST:PORT."""
    kind, _, rest = spec.partition(":")
    if kind == "tcp":
        host, _, port = rest.rpartition(":")
        if not host or not port.isdigit():
            raise ValueError("tcp generator address must be tcp:HOST:PORT")
        return LineProtocolGenerator(host, int(port))
    raise ValueError(f"unknown generator address {spec!r} (use tcp:HOST:PORT)")


@dataclass(frozen=True)
class AnnotationConfig:
    shuffles: int = 3
    top_p: float = 0.95
    epsilon: float = 1e-2
    max_fixpoint_iters: int = 20
    seed: int = 0
    match_policy: str = "contains"
    corpus: tuple[Document, ...] = ()

    def __post_init__(self):
        if self.shuffles < 1:
            raise ValueError("shuffles must be >= 1")
        if self.max_fixpoint_iters < 1:
            raise ValueError("max_fixpoint_iters must be >= 1")
        if self.match_policy not in MATCH_POLICIES:
            raise ValueError(f"unknown match policy {self.match_policy!r}")


@dataclass(frozen=True)
class AnnotationOutcome:
    variant: str  # "positive" | "negative" | "discarded"
    positive_ids: tuple[str, ...]
    negative_ids: tuple[str, ...]


class SubsetCompressor(Protocol):
    """Scores an ordered subset of a sample's documents."""

    def scores_for(
        self,
        index: int,
        sample: QuerySample,
        granularity: Granularity = Granularity.DOCUMENT,
        doc_ids: list[str] | None = None,
    ) -> SegmentScores: ...


def compress_to_fixpoint(
    compressor: SubsetCompressor,
    sample: QuerySample,
    doc_ids: list[str],
    config: AnnotationConfig,
    index: int = 0,
) -> list[str]:
    """Re-score and re-compress until the retained count stops shrinking.

    Termination is the size-stability test (a same-size result stops the
    loop even if membership changed).  An empty retained set is final.
    """
    topp = TopPConfig(p=config.top_p, epsilon=config.epsilon)
    current = list(doc_ids)
    for _ in range(config.max_fixpoint_iters):
        if not current:
            return current
        scores = compressor.scores_for(index, sample, Granularity.DOCUMENT, current)
        kept = [d for d in current if d in compress(scores, topp).kept_set]
        if len(kept) == len(current):
            return kept
        current = kept
    raise FixpointError(
        f"compression did not stabilize within {config.max_fixpoint_iters} iterations"
    )


def annotate(
    sample: QuerySample,
    compressor: SubsetCompressor,
    generator: GeneratorClient,
    matcher: Callable[[str, Sequence[str]], int],
    config: AnnotationConfig,
    index: int = 0,
) -> AnnotationOutcome:
    """Label one sample by shuffled fixpoint compression plus verification.

    Shuffles are applied to the id-sorted document list with per-round
    streams derived from the config seed, so the outcome is invariant to
    the input order of the documents.
    """
    if not sample.gold_answers:
        raise GeneratorError("sample has no gold answers to verify against")

    canonical = sorted(d.id for d in sample.documents)
    retained_sets: list[set[str]] = []
    for round_no in range(config.shuffles):
        stream = PcgStream.derived(config.seed, "shuffle", round_no, sample.query)
        round_order = stream.shuffled(canonical)
        retained = compress_to_fixpoint(compressor, sample, round_order, config, index)
        retained_sets.append(set(retained))

    d_plus_ids = set.intersection(*retained_sets) if retained_sets else set()
    docs_by_id = {d.id: d for d in sample.documents}
    d_plus = [d for d in sample.documents if d.id in d_plus_ids]
    d_minus = [d for d in sample.documents if d.id not in d_plus_ids]

    answer_plus = generator.generate(sample.query, d_plus)
    if matcher(answer_plus, sample.gold_answers):
        return AnnotationOutcome(
            variant="positive",
            positive_ids=tuple(d.id for d in d_plus),
            negative_ids=tuple(d.id for d in d_minus),
        )

    answer_full = generator.generate(sample.query, list(sample.documents))
    if matcher(answer_full, sample.gold_answers):
        return AnnotationOutcome(variant="discarded", positive_ids=(), negative_ids=())

    # all-irrelevant sample: swap the candidate set for random corpus docs
    pool = [d for d in config.corpus if d.id not in docs_by_id]
    replacement: list[Document] = []
    if d_plus and pool:
        stream = PcgStream.derived(config.seed, "replacement", sample.query)
        replacement = stream.shuffled(pool)[: len(d_plus)]
    return AnnotationOutcome(
        variant="negative",
        positive_ids=(),
        negative_ids=tuple(d.id for d in d_minus) + tuple(d.id for d in replacement),
    )


def write_annotations(path: str, rows: list[tuple[QuerySample, AnnotationOutcome]]) -> None:
    """Emit accepted annotations as JSONL; discarded samples are omitted."""
    with open(path, "w", encoding="utf-8") as fh:
        for sample, outcome in rows:
            if outcome.variant == "discarded":
                continue
            fh.write(
                json.dumps(
                    {
                        "query": sample.query,
                        "positive_ids": list(outcome.positive_ids),
                        "negative_ids": list(outcome.negative_ids),
                        "variant": outcome.variant,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
