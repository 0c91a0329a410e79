/**
 * A small self-contained causal transformer for export experiments.
 *
 * Decoder-only, pre-LayerNorm blocks, multi-head causal attention with
 * optional rotary position encoding on q/k, GELU MLP, bias-free
 * projections. Weights are drawn from seeded streams (one per tensor), so
 * a model identifier fully determines every parameter. The forward pass
 * can capture, at a requested block boundary, both the residual stream
 * and the normalized attention input, plus per-head attention maps.
 */

import { PcgStream } from "./rng.js";
import { VOCAB_SIZE } from "./tokenizer.js";

export interface ModelConfig {
  name: string;
  seed: number;
  nLayers: number;
  dModel: number;
  nHeads: number;
  maxSeq: number;
  rotary: boolean;
}

export type CaptureMode = "residual" | "post_attn_norm";

export interface LayerWeights {
  ln1g: Float64Array;
  ln1b: Float64Array;
  wq: Float64Array; // (dModel, dModel) row-major
  wk: Float64Array;
  wv: Float64Array;
  wo: Float64Array;
  ln2g: Float64Array;
  ln2b: Float64Array;
  wUp: Float64Array; // (dModel, 4*dModel)
  wDown: Float64Array; // (4*dModel, dModel)
}

export interface ForwardCapture {
  /** residual stream after the first `layer` blocks, (seq, dModel) rows */
  residual: Float64Array[];
  /** LayerNorm'd input to block `layer`'s attention (the q/k/v input) */
  postAttnNorm: Float64Array[];
  /** per-head post-softmax attention of block `layer`, [head][query][key] */
  attention: number[][][];
}

const INIT_STD = 0.08;

function seededMatrix(stream: PcgStream, rows: number, cols: number, std: number): Float64Array {
  const out = stream.gaussians(rows * cols);
  const scaled = new Float64Array(rows * cols);
  for (let i = 0; i < out.length; i++) scaled[i] = out[i] * std;
  return scaled;
}

function ones(n: number): Float64Array {
  return new Float64Array(n).fill(1);
}

function layerNorm(row: Float64Array, gain: Float64Array, bias: Float64Array): Float64Array {
  const n = row.length;
  let mean = 0;
  for (let i = 0; i < n; i++) mean += row[i];
  mean /= n;
  let variance = 0;
  for (let i = 0; i < n; i++) variance += (row[i] - mean) ** 2;
  variance /= n;
  const inv = 1 / Math.sqrt(variance + 1e-5);
  const out = new Float64Array(n);
  for (let i = 0; i < n; i++) out[i] = (row[i] - mean) * inv * gain[i] + bias[i];
  return out;
}

/** y = x @ W for a single row, W row-major (inDim, outDim). */
function rowMatmul(x: Float64Array, w: Float64Array, outDim: number): Float64Array {
  const inDim = x.length;
  const out = new Float64Array(outDim);
  for (let i = 0; i < inDim; i++) {
    const xi = x[i];
    if (xi === 0) continue;
    const base = i * outDim;
    for (let j = 0; j < outDim; j++) out[j] += xi * w[base + j];
  }
  return out;
}

function gelu(x: number): number {
  return 0.5 * x * (1 + Math.tanh(Math.sqrt(2 / Math.PI) * (x + 0.044715 * x ** 3)));
}

function applyRotary(vec: Float64Array, pos: number, headDim: number, offset: number): void {
  for (let i = 0; i < headDim / 2; i++) {
    const theta = pos / Math.pow(10000, (2 * i) / headDim);
    const cos = Math.cos(theta);
    const sin = Math.sin(theta);
    const a = vec[offset + 2 * i];
    const b = vec[offset + 2 * i + 1];
    vec[offset + 2 * i] = a * cos - b * sin;
    vec[offset + 2 * i + 1] = a * sin + b * cos;
  }
}

export class TinyCausalLM {
  readonly config: ModelConfig;
  readonly headDim: number;
  readonly embedding: Float64Array; // (vocab, dModel)
  readonly layers: LayerWeights[];

  constructor(config: ModelConfig) {
    if (config.dModel % config.nHeads !== 0) {
      throw new Error("dModel must be divisible by nHeads");
    }
    this.config = config;
    this.headDim = config.dModel / config.nHeads;
    const d = config.dModel;
    this.embedding = seededMatrix(
      PcgStream.derived(config.seed, "embedding"), VOCAB_SIZE, d, INIT_STD,
    );
    this.layers = [];
    for (let l = 0; l < config.nLayers; l++) {
      const tensor = (name: string, rows: number, cols: number) =>
        seededMatrix(PcgStream.derived(config.seed, "layer", l, name), rows, cols, INIT_STD);
      this.layers.push({
        ln1g: ones(d),
        ln1b: new Float64Array(d),
        wq: tensor("wq", d, d),
        wk: tensor("wk", d, d),
        wv: tensor("wv", d, d),
        wo: tensor("wo", d, d),
        ln2g: ones(d),
        ln2b: new Float64Array(d),
        wUp: tensor("w_up", d, 4 * d),
        wDown: tensor("w_down", 4 * d, d),
      });
    }
  }

  /**
   * Q/K projection slices for one head of one block: (dModel, headDim)
   * row-major, cut column-wise out of the fused projection matrices.
   */
  headSlices(layer: number, head: number): { wq: Float64Array; wk: Float64Array } {
    if (layer < 0 || layer >= this.config.nLayers) {
      throw new Error(`layer ${layer} out of range`);
    }
    if (head < 0 || head >= this.config.nHeads) {
      throw new Error(`head index ${head} invalid for this model`);
    }
    const d = this.config.dModel;
    const hd = this.headDim;
    const cut = (w: Float64Array) => {
      const out = new Float64Array(d * hd);
      for (let i = 0; i < d; i++) {
        for (let j = 0; j < hd; j++) out[i * hd + j] = w[i * d + head * hd + j];
      }
      return out;
    };
    return { wq: cut(this.layers[layer].wq), wk: cut(this.layers[layer].wk) };
  }

  /**
   * Run the first `captureLayer + 1` blocks and capture at the boundary:
   * the residual stream entering block `captureLayer`, its normalized
   * attention input, and that block's per-head attention maps.
   */
  forward(ids: Uint8Array, captureLayer: number): ForwardCapture {
    const { dModel, nHeads, maxSeq, rotary } = this.config;
    if (ids.length > maxSeq) {
      throw new Error(`prompt of ${ids.length} tokens exceeds model context ${maxSeq}`);
    }
    if (captureLayer < 0 || captureLayer >= this.config.nLayers) {
      throw new Error(`capture layer ${captureLayer} out of range`);
    }
    const seq = ids.length;
    const hd = this.headDim;
    const scale = 1 / Math.sqrt(hd);

    let h: Float64Array[] = [];
    for (let t = 0; t < seq; t++) {
      h.push(this.embedding.slice(ids[t] * dModel, (ids[t] + 1) * dModel));
    }

    let captured: ForwardCapture | null = null;
    for (let l = 0; l <= captureLayer; l++) {
      const weights = this.layers[l];
      const normed = h.map((row) => layerNorm(row, weights.ln1g, weights.ln1b));
      const q = normed.map((row) => rowMatmul(row, weights.wq, dModel));
      const k = normed.map((row) => rowMatmul(row, weights.wk, dModel));
      const v = normed.map((row) => rowMatmul(row, weights.wv, dModel));
      if (rotary) {
        for (let t = 0; t < seq; t++) {
          for (let head = 0; head < nHeads; head++) {
            applyRotary(q[t], t, hd, head * hd);
            applyRotary(k[t], t, hd, head * hd);
          }
        }
      }

      const attention: number[][][] = [];
      const attnOut: Float64Array[] = h.map(() => new Float64Array(dModel));
      for (let head = 0; head < nHeads; head++) {
        const offset = head * hd;
        const perHead: number[][] = [];
        for (let t = 0; t < seq; t++) {
          const logits = new Float64Array(t + 1);
          let max = -Infinity;
          for (let s = 0; s <= t; s++) {
            let dot = 0;
            for (let j = 0; j < hd; j++) dot += q[t][offset + j] * k[s][offset + j];
            logits[s] = dot * scale;
            if (logits[s] > max) max = logits[s];
          }
          let total = 0;
          for (let s = 0; s <= t; s++) {
            logits[s] = Math.exp(logits[s] - max);
            total += logits[s];
          }
          const row = new Array<number>(seq).fill(0);
          for (let s = 0; s <= t; s++) {
            const p = logits[s] / total;
            row[s] = p;
            for (let j = 0; j < hd; j++) attnOut[t][offset + j] += p * v[s][offset + j];
          }
          perHead.push(row);
        }
        attention.push(perHead);
      }

      if (l === captureLayer) {
        captured = { residual: h.map((r) => r.slice()), postAttnNorm: normed, attention };
        break; // later blocks cannot affect the captured values
      }

      const next: Float64Array[] = [];
      for (let t = 0; t < seq; t++) {
        const afterAttn = h[t].slice();
        const projected = rowMatmul(attnOut[t], weights.wo, dModel);
        for (let j = 0; j < dModel; j++) afterAttn[j] += projected[j];
        const normed2 = layerNorm(afterAttn, weights.ln2g, weights.ln2b);
        const up = rowMatmul(normed2, weights.wUp, 4 * dModel);
        for (let j = 0; j < up.length; j++) up[j] = gelu(up[j]);
        const down = rowMatmul(up, weights.wDown, dModel);
        for (let j = 0; j < dModel; j++) afterAttn[j] += down[j];
        next.push(afterAttn);
      }
      h = next;
    }
    if (!captured) throw new Error("unreachable: capture layer not visited");
    return captured;
  }
}

/** Built-in model identifiers: `tinyrand-v1` with an optional `:SEED`. */
export function modelFromIdentifier(id: string, rotary = true): TinyCausalLM {
  const [name, seedText] = id.split(":");
  if (name !== "tinyrand-v1") {
    throw new Error(`unknown model identifier ${id} (expected tinyrand-v1[:SEED])`);
  }
  const seed = seedText ? Number.parseInt(seedText, 10) : 1;
  if (Number.isNaN(seed)) throw new Error(`bad model seed in ${id}`);
  return new TinyCausalLM({
    name: `${name}:${seed}`,
    seed,
    nLayers: 14,
    dModel: 64,
    nHeads: 8,
    maxSeq: 2048,
    rotary,
  });
}
