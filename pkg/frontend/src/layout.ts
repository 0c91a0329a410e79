/**
 * Prompt assembly with exact span bookkeeping.
 *
 * The context is `instruction + documents` (each segment carrying its own
 * trailing separator so the spans partition the context bytes exactly),
 * followed by the query. Span offsets are token indices under the
 * byte-level tokenizer, so they double as byte offsets.
 */

import { tokenCount } from "./tokenizer.js";

export interface DatasetDocument {
  id: string;
  title: string;
  text: string;
}

export interface SpanEntry {
  kind: "instruction" | "document" | "sentence";
  owner: string;
  start: number;
  end: number;
}

export interface AssembledPrompt {
  contextText: string;
  queryText: string;
  spans: SpanEntry[];
  n: number;
  m: number;
}

export const DEFAULT_INSTRUCTION =
  "Answer the question using only the documents below.\n\n";

export const INSTRUCTION_OWNER = "__instruction__";

function documentSegment(doc: DatasetDocument): string {
  const title = doc.title ? `(${doc.title}) ` : "";
  return `${title}${doc.text}\n\n`;
}

export function assemblePrompt(
  documents: DatasetDocument[],
  query: string,
  instruction: string = DEFAULT_INSTRUCTION,
): AssembledPrompt {
  if (documents.length === 0) {
    throw new Error("no segments: document list is empty");
  }
  const spans: SpanEntry[] = [];
  let context = instruction;
  let cursor = tokenCount(instruction);
  spans.push({ kind: "instruction", owner: INSTRUCTION_OWNER, start: 0, end: cursor });
  for (const doc of documents) {
    const segment = documentSegment(doc);
    const length = tokenCount(segment);
    spans.push({ kind: "document", owner: doc.id, start: cursor, end: cursor + length });
    context += segment;
    cursor += length;
  }
  const queryText = `Question: ${query}`;
  return {
    contextText: context,
    queryText,
    spans,
    n: cursor,
    m: tokenCount(queryText),
  };
}
