/**
 * JSONL dataset reader matching the consumer library's ingestion schema:
 * {"query": str, "answers": [str], "documents": [{"id", "title", "text"}],
 *  "labels": [0|1]?} — one object per line, UTF-8.
 */

import * as fs from "node:fs";

import type { DatasetDocument } from "./layout.js";

export interface DatasetSample {
  query: string;
  answers: string[];
  documents: DatasetDocument[];
  labels?: number[];
}

export function loadDataset(file: string): DatasetSample[] {
  const samples: DatasetSample[] = [];
  const lines = fs.readFileSync(file, "utf-8").split("\n");
  lines.forEach((line, index) => {
    if (!line.trim()) return;
    let obj: any;
    try {
      obj = JSON.parse(line);
    } catch (err) {
      throw new Error(`${file}:${index + 1}: invalid JSON (${err})`);
    }
    if (typeof obj.query !== "string" || !Array.isArray(obj.documents)) {
      throw new Error(`${file}:${index + 1}: bad sample`);
    }
    samples.push({
      query: obj.query,
      answers: obj.answers ?? [],
      documents: obj.documents.map((d: any) => ({
        id: String(d.id),
        title: String(d.title ?? ""),
        text: String(d.text),
      })),
      labels: obj.labels,
    });
  });
  return samples;
}
