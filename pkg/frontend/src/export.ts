/**
 * Export jobs: hidden states, head-weight slices, and attention maps, all
 * in the consumer library's bundle format.
 *
 * Hidden states are captured at the boundary after the first `layer`
 * blocks; weight slices and attention maps come from the next block (the
 * one whose heads would seed a scoring head). Two capture modes exist for
 * hidden states: the raw residual stream (default) and the normalized
 * attention input of the next block (`post_attn_norm`), which is the
 * mode under which recomputed attention can be compared against the
 * model's own maps. The mode and rotary setting are recorded in each
 * manifest.
 */

import * as path from "node:path";

import { writeBundle, type BundleHeader } from "./bundle.js";
import type { DatasetSample } from "./dataset.js";
import { assemblePrompt, DEFAULT_INSTRUCTION } from "./layout.js";
import { TinyCausalLM, type CaptureMode } from "./model.js";
import { encode, TOKENIZER_NAME, tokenCount } from "./tokenizer.js";

export interface ExportJob {
  model: TinyCausalLM;
  /** number of retained transformer blocks; capture happens after them */
  layer: number;
  headIndices: number[];
  samples: DatasetSample[];
  outDir: string;
  instruction?: string;
  capture?: CaptureMode;
}

export interface ExportOutcome {
  written: string[];
  skipped: { index: number; reason: string }[];
}

function samplePath(outDir: string, index: number): string {
  return path.join(outDir, `sample_${String(index).padStart(5, "0")}`);
}

function exportMeta(job: ExportJob, capture?: CaptureMode) {
  return {
    model: job.model.config.name,
    rotary: job.model.config.rotary,
    capture: capture ?? "residual",
  };
}

function flattenRows(rows: Float64Array[], width: number): Float64Array {
  const out = new Float64Array(rows.length * width);
  rows.forEach((row, i) => out.set(row, i * width));
  return out;
}

/** One hidden-state bundle (x_c, x_q) per sample. */
export function exportHiddenStates(job: ExportJob): ExportOutcome {
  const { model } = job;
  const capture: CaptureMode = job.capture ?? "residual";
  const outcome: ExportOutcome = { written: [], skipped: [] };
  job.samples.forEach((sample, index) => {
    const prompt = assemblePrompt(
      sample.documents, sample.query, job.instruction ?? DEFAULT_INSTRUCTION,
    );
    const ids = encode(prompt.contextText + prompt.queryText);
    if (ids.length > model.config.maxSeq) {
      outcome.skipped.push({
        index,
        reason: `prompt of ${ids.length} tokens exceeds model context ${model.config.maxSeq}`,
      });
      return;
    }
    const result = model.forward(ids, job.layer);
    const rows = capture === "residual" ? result.residual : result.postAttnNorm;
    const d = model.config.dModel;
    const header: BundleHeader = {
      m: prompt.m,
      n: prompt.n,
      dModel: d,
      h: 0,
      dA: 0,
      spans: prompt.spans,
      tokenizer: TOKENIZER_NAME,
      sourceLayer: job.layer,
      headIndices: [],
      exportMeta: exportMeta(job, capture),
    };
    const dir = samplePath(job.outDir, index);
    writeBundle(dir, header, {
      x_c: { dims: [prompt.n, d], data: flattenRows(rows.slice(0, prompt.n), d) },
      x_q: { dims: [prompt.m, d], data: flattenRows(rows.slice(prompt.n), d) },
    });
    outcome.written.push(dir);
  });
  return outcome;
}

/** Q/K slices of the selected heads from the block after the boundary. */
export function exportHeadWeights(job: ExportJob): string {
  const { model } = job;
  const d = model.config.dModel;
  const hd = model.headDim;
  const h = job.headIndices.length;
  if (h === 0) throw new Error("no head indices given");
  const wq = new Float64Array(h * d * hd);
  const wk = new Float64Array(h * d * hd);
  job.headIndices.forEach((head, i) => {
    const slices = model.headSlices(job.layer, head);
    wq.set(slices.wq, i * d * hd);
    wk.set(slices.wk, i * d * hd);
  });
  const header: BundleHeader = {
    m: 0,
    n: 0,
    dModel: d,
    h,
    dA: hd,
    spans: [],
    tokenizer: TOKENIZER_NAME,
    sourceLayer: job.layer,
    headIndices: job.headIndices,
    exportMeta: exportMeta(job),
  };
  writeBundle(job.outDir, header, {
    w_q: { dims: [h, d, hd], data: wq },
    w_k: { dims: [h, d, hd], data: wk },
  });
  return job.outDir;
}

/**
 * Per-head query-to-context attention maps for the boundary block,
 * renormalized over context columns (the model's softmax also covers
 * preceding query tokens; restricting a softmax to a subset equals the
 * renormalized restriction).
 */
export function exportAttentionMaps(job: ExportJob): ExportOutcome {
  const { model } = job;
  const outcome: ExportOutcome = { written: [], skipped: [] };
  job.samples.forEach((sample, index) => {
    const prompt = assemblePrompt(
      sample.documents, sample.query, job.instruction ?? DEFAULT_INSTRUCTION,
    );
    const ids = encode(prompt.contextText + prompt.queryText);
    if (ids.length > model.config.maxSeq) {
      outcome.skipped.push({
        index,
        reason: `prompt of ${ids.length} tokens exceeds model context ${model.config.maxSeq}`,
      });
      return;
    }
    const result = model.forward(ids, job.layer);
    const heads = job.headIndices.length ? job.headIndices : [...Array(model.config.nHeads).keys()];
    const { n, m } = prompt;
    const stack = new Float64Array(heads.length * m * n);
    heads.forEach((head, hi) => {
      for (let qi = 0; qi < m; qi++) {
        const row = result.attention[head][n + qi];
        let total = 0;
        for (let j = 0; j < n; j++) total += row[j];
        for (let j = 0; j < n; j++) stack[hi * m * n + qi * n + j] = row[j] / total;
      }
    });
    const header: BundleHeader = {
      m,
      n,
      dModel: model.config.dModel,
      h: heads.length,
      dA: model.headDim,
      spans: prompt.spans,
      tokenizer: TOKENIZER_NAME,
      sourceLayer: job.layer,
      headIndices: heads,
      exportMeta: exportMeta(job),
    };
    const dir = samplePath(job.outDir, index);
    writeBundle(dir, header, { attention: { dims: [heads.length, m, n], data: stack } });
    outcome.written.push(dir);
  });
  return outcome;
}

/** Token totals of the assembled prompt, for span-table verification. */
export function promptTokenTotals(sample: DatasetSample, instruction?: string) {
  const prompt = assemblePrompt(sample.documents, sample.query, instruction ?? DEFAULT_INSTRUCTION);
  return {
    spansTotal: prompt.spans.reduce((acc, s) => acc + (s.end - s.start), 0) + prompt.m,
    tokenized: tokenCount(prompt.contextText + prompt.queryText),
    n: prompt.n,
    m: prompt.m,
  };
}
