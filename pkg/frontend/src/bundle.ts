/**
 * Writer and validator for the consumer library's bundle format.
 *
 * A bundle directory holds manifest.json plus one raw payload per tensor:
 * row-major little-endian f32, each with a 64-bit FNV-1a checksum in the
 * manifest. Span tables must partition [0, n).
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { fnv1a64 } from "./rng.js";
import type { SpanEntry } from "./layout.js";

export interface TensorPayload {
  dims: number[];
  data: Float64Array | Float32Array;
}

export interface BundleHeader {
  m: number;
  n: number;
  dModel: number;
  h: number;
  dA: number;
  spans: SpanEntry[];
  tokenizer: string;
  sourceLayer: number;
  headIndices: number[];
  /** loader-ignored provenance: model id, rotary and capture modes */
  exportMeta?: Record<string, unknown>;
}

function toF32Bytes(data: Float64Array | Float32Array): Uint8Array {
  const f32 = data instanceof Float32Array ? data : Float32Array.from(data);
  return new Uint8Array(f32.buffer.slice(0), 0, f32.length * 4);
}

export function writeBundle(
  dir: string,
  header: BundleHeader,
  tensors: Record<string, TensorPayload>,
): void {
  fs.mkdirSync(dir, { recursive: true });
  const tensorMeta: Record<string, { dims: number[]; file: string; fnv1a64: string }> = {};
  for (const [name, tensor] of Object.entries(tensors)) {
    const expected = tensor.dims.reduce((a, b) => a * b, 1);
    if (expected !== tensor.data.length) {
      throw new Error(`tensor ${name}: dims ${tensor.dims} do not match payload`);
    }
    const bytes = toF32Bytes(tensor.data);
    const file = `${name}.bin`;
    fs.writeFileSync(path.join(dir, file), bytes);
    tensorMeta[name] = {
      dims: tensor.dims,
      file,
      fnv1a64: fnv1a64(bytes).toString(16).padStart(16, "0"),
    };
  }
  const manifest: Record<string, unknown> = {
    m: header.m,
    n: header.n,
    d_model: header.dModel,
    H: header.h,
    d_a: header.dA,
    dtype: "f32",
    tensors: tensorMeta,
    spans: header.spans,
    tokenizer: header.tokenizer,
    source_layer: header.sourceLayer,
    head_indices: header.headIndices,
  };
  if (header.exportMeta) manifest.export_meta = header.exportMeta;
  fs.writeFileSync(path.join(dir, "manifest.json"), JSON.stringify(manifest, null, 1) + "\n");
}

export interface LoadedBundle {
  manifest: any;
  tensors: Record<string, { dims: number[]; data: Float32Array }>;
}

/** Full read-back validation: dims, byte lengths, checksums, span table. */
export function validateBundle(dir: string): LoadedBundle {
  const manifestPath = path.join(dir, "manifest.json");
  const manifest = JSON.parse(fs.readFileSync(manifestPath, "utf-8"));
  for (const key of ["m", "n", "d_model", "H", "d_a", "dtype", "tensors", "spans"]) {
    if (!(key in manifest)) throw new Error(`${dir}: manifest missing ${key}`);
  }
  if (manifest.dtype !== "f32") throw new Error(`${dir}: unknown dtype ${manifest.dtype}`);

  let cursor = 0;
  for (const span of manifest.spans) {
    if (span.start !== cursor) {
      throw new Error(`${dir}: span table gap over tokens [${cursor}, ${span.start})`);
    }
    if (span.end <= span.start) throw new Error(`${dir}: empty span at ${span.start}`);
    cursor = span.end;
  }
  if (cursor !== manifest.n) {
    throw new Error(`${dir}: span table gap over tokens [${cursor}, ${manifest.n})`);
  }

  const tensors: LoadedBundle["tensors"] = {};
  for (const [name, meta] of Object.entries<any>(manifest.tensors)) {
    const bytes = fs.readFileSync(path.join(dir, meta.file));
    const expected = meta.dims.reduce((a: number, b: number) => a * b, 1) * 4;
    if (bytes.length !== expected) {
      throw new Error(`${dir}: tensor ${name} is ${bytes.length} bytes, expected ${expected}`);
    }
    const digest = fnv1a64(new Uint8Array(bytes)).toString(16).padStart(16, "0");
    if (digest !== meta.fnv1a64) {
      throw new Error(`${dir}: tensor ${name} checksum ${digest} != recorded ${meta.fnv1a64}`);
    }
    tensors[name] = {
      dims: meta.dims,
      data: new Float32Array(bytes.buffer, bytes.byteOffset, bytes.length / 4),
    };
  }
  return { manifest, tensors };
}
