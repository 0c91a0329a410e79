"""Queries, retrieved documents, and prompt span bookkeeping.

An assembled prompt is `instruction + documents + query`; every attention
column maps to exactly one context segment.  PromptLayout records that map
as token spans: the instruction span first, then one span per document (or
per sentence at sentence granularity) in retrieval order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

from .errors import LayoutError

INSTRUCTION_ID = "__instruction__"

# Words that end with '.' without terminating a sentence.
_ABBREVIATIONS = frozenset(
    {
        "dr",
        "mr",
        "mrs",
        "ms",
        "prof",
        "sr",
        "jr",
        "st",
        "no",
        "vs",
        "etc",
        "e.g",
        "i.e",
        "cf",
        "al",
        "fig",
        "approx",
        "dept",
        "est",
        "inc",
        "ltd",
        "col",
        "gen",
        "rev",
        "hon",
        "sgt",
        "capt",
        "lt",
    }
)


class Granularity(str, Enum):
    DOCUMENT = "doc"
    SENTENCE = "sentence"


class SpanKind(str, Enum):
    INSTRUCTION = "instruction"
    DOCUMENT = "document"
    SENTENCE = "sentence"


def fallback_token_count(text: str) -> int:
    """Whitespace word count, used when no tokenizer counts are supplied."""
    count = len(text.split())
    if count == 0:
        raise ValueError("untokenizable: text has no tokens")
    return count


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    text: str
    token_count: int

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"document {self.id!r}: empty text")
        if self.token_count < 1:
            raise ValueError(f"document {self.id!r}: token_count must be >= 1")

    @classmethod
    def from_text(cls, id: str, text: str, title: str = "") -> "Document":
        return cls(id=id, title=title, text=text, token_count=fallback_token_count(text))


@dataclass(frozen=True)
class QuerySample:
    query: str
    gold_answers: tuple[str, ...]
    documents: tuple[Document, ...]
    relevance_labels: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.relevance_labels is not None:
            if len(self.relevance_labels) != len(self.documents):
                raise ValueError("relevance_labels length must match documents")
            if any(r not in (0, 1) for r in self.relevance_labels):
                raise ValueError("relevance_labels must be 0 or 1")

    def with_documents(self, documents: Iterable[Document]) -> "QuerySample":
        """Same query over a different document list; labels are realigned."""
        docs = tuple(documents)
        labels = None
        if self.relevance_labels is not None:
            by_id = {d.id: r for d, r in zip(self.documents, self.relevance_labels)}
            labels = tuple(by_id[d.id] for d in docs)
        return QuerySample(self.query, self.gold_answers, docs, labels)


@dataclass(frozen=True)
class SegmentSpan:
    kind: SpanKind
    owner_id: str
    start: int
    end: int
    ordinal: int = 0  # sentence index within its owner document

    def __post_init__(self):
        if self.start >= self.end:
            raise LayoutError(f"span {self.owner_id!r}: start must precede end")

    @property
    def length(self) -> int:
        return self.end - self.start

    @property
    def ident(self) -> str:
        """Selection-unit identity: doc id, or doc id + sentence ordinal."""
        if self.kind is SpanKind.SENTENCE:
            return f"{self.owner_id}::{self.ordinal}"
        return self.owner_id


@dataclass(frozen=True)
class PromptLayout:
    context_spans: tuple[SegmentSpan, ...]
    n: int
    m: int
    granularity: Granularity

    def __post_init__(self):
        spans = self.context_spans
        if not spans or spans[0].kind is not SpanKind.INSTRUCTION:
            raise LayoutError("layout must start with the instruction span")
        if sum(1 for s in spans if s.kind is SpanKind.INSTRUCTION) != 1:
            raise LayoutError("layout must contain exactly one instruction span")
        cursor = 0
        for s in spans:
            if s.start != cursor:
                raise LayoutError(f"gap or overlap at token {cursor} (span starts {s.start})")
            cursor = s.end
        if cursor != self.n:
            raise LayoutError(f"spans cover [0, {cursor}) but n={self.n}")
        if self.m < 1:
            raise LayoutError("query must contain at least one token")

    @property
    def query_span(self) -> tuple[int, int]:
        """Query token range within the full prompt (context comes first)."""
        return (self.n, self.n + self.m)

    @property
    def instruction_span(self) -> SegmentSpan:
        return self.context_spans[0]

    @property
    def segment_spans(self) -> tuple[SegmentSpan, ...]:
        """Document or sentence spans, excluding the instruction."""
        return self.context_spans[1:]

    def document_ids(self) -> list[str]:
        seen: list[str] = []
        for s in self.segment_spans:
            if s.owner_id not in seen:
                seen.append(s.owner_id)
        return seen

    def doc_token_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for s in self.segment_spans:
            counts[s.owner_id] = counts.get(s.owner_id, 0) + s.length
        return counts


def assemble_layout(
    instruction_token_count: int,
    documents: list[Document],
    query_token_count: int,
    granularity: Granularity = Granularity.DOCUMENT,
    sentence_token_counts: dict[str, list[int]] | None = None,
) -> PromptLayout:
    """Build the span map for an assembled prompt.

    Documents appear in input order directly after the instruction span.
    At sentence granularity each document contributes one span per sentence;
    counts come from `sentence_token_counts` when the caller has tokenizer
    truth, otherwise from whitespace counts of the rule-based sentence split.
    """
    if instruction_token_count < 1 or query_token_count < 1:
        raise LayoutError("instruction and query token counts must be >= 1")
    if not documents:
        raise LayoutError("no segments: document list is empty")

    spans = [SegmentSpan(SpanKind.INSTRUCTION, INSTRUCTION_ID, 0, instruction_token_count)]
    cursor = instruction_token_count
    if granularity is Granularity.DOCUMENT:
        for doc in documents:
            spans.append(SegmentSpan(SpanKind.DOCUMENT, doc.id, cursor, cursor + doc.token_count))
            cursor += doc.token_count
    else:
        for doc in documents:
            if sentence_token_counts and doc.id in sentence_token_counts:
                counts = sentence_token_counts[doc.id]
            else:
                counts = [fallback_token_count(s) for s in split_sentences(doc.text)]
            if not counts:
                raise LayoutError(f"document {doc.id!r} produced no sentences")
            for ordinal, count in enumerate(counts):
                if count < 1:
                    raise LayoutError(f"document {doc.id!r}: sentence of zero tokens")
                spans.append(
                    SegmentSpan(SpanKind.SENTENCE, doc.id, cursor, cursor + count, ordinal)
                )
                cursor += count
    return PromptLayout(
        context_spans=tuple(spans), n=cursor, m=query_token_count, granularity=granularity
    )


def split_sentence_spans(text: str) -> list[tuple[int, int]]:
    """Sentence boundaries as (start, end) slices that exactly tile the text.

    A boundary falls after terminal `.?!` (plus any closing quotes or
    brackets) that is followed by whitespace and an uppercase letter or
    digit, unless the preceding word is a known abbreviation.
    """
    if not text:
        return []
    bounds = []
    i = 0
    length = len(text)
    while i < length:
        ch = text[i]
        if ch in ".?!":
            j = i + 1
            while j < length and text[j] in "\"')]}’”":
                j += 1
            k = j
            while k < length and text[k].isspace():
                k += 1
            first = k
            while first < length and text[first] in "\"'([{‘“":
                first += 1
            if k > j and first < length and (text[first].isupper() or text[first].isdigit()):
                if not (ch == "." and _ends_with_abbreviation(text, i)):
                    bounds.append(j)
                    i = k
                    continue
        i += 1
    spans = []
    start = 0
    for b in bounds:
        spans.append((start, b))
        start = b
    spans.append((start, length))
    return spans


def _ends_with_abbreviation(text: str, period_index: int) -> bool:
    start = period_index
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    word = text[start:period_index].lower().lstrip("\"'([{")
    return word in _ABBREVIATIONS


def split_sentences(text: str) -> list[str]:
    """Rule-based sentence split; whitespace-only input yields []."""
    out = []
    for start, end in split_sentence_spans(text):
        sentence = text[start:end].strip()
        if sentence:
            out.append(sentence)
    return out


def load_dataset(path: str) -> list[QuerySample]:
    """Read the JSONL dataset format.

    One object per line: {"query": str, "answers": [str],
    "documents": [{"id": str, "title": str, "text": str}],
    "labels": [0|1]} with labels optional.  Document token counts use the
    whitespace fallback; providers with real tokenizers override them via
    bundle span tables.
    """
    samples = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            try:
                docs = tuple(
                    Document.from_text(
                        id=d["id"], text=d["text"], title=d.get("title", "")
                    )
                    for d in obj["documents"]
                )
                labels = obj.get("labels")
                samples.append(
                    QuerySample(
                        query=obj["query"],
                        gold_answers=tuple(obj.get("answers", [])),
                        documents=docs,
                        relevance_labels=tuple(labels) if labels is not None else None,
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{line_no}: bad sample: {exc}") from exc
    return samples


def save_dataset(samples: Iterable[QuerySample], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            obj = {
                "query": s.query,
                "answers": list(s.gold_answers),
                "documents": [
                    {"id": d.id, "title": d.title, "text": d.text} for d in s.documents
                ],
            }
            if s.relevance_labels is not None:
                obj["labels"] = list(s.relevance_labels)
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
