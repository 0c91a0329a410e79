import * as fs from "node:fs";
import * as path from "node:path";
import * as os from "node:os";

import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { writeBundle, validateBundle, type BundleHeader } from "../src/bundle.js";

let dir: string;
beforeEach(() => {
  dir = fs.mkdtempSync(path.join(os.tmpdir(), "bundle-"));
});
afterEach(() => {
  fs.rmSync(dir, { recursive: true, force: true });
});

function header(overrides: Partial<BundleHeader> = {}): BundleHeader {
  return {
    m: 2,
    n: 5,
    dModel: 3,
    h: 0,
    dA: 0,
    spans: [
      { kind: "instruction", owner: "__instruction__", start: 0, end: 2 },
      { kind: "document", owner: "d1", start: 2, end: 5 },
    ],
    tokenizer: "byte-v1",
    sourceLayer: 13,
    headIndices: [],
    ...overrides,
  };
}

function tensors() {
  return {
    x_c: { dims: [5, 3], data: Float64Array.from({ length: 15 }, (_, i) => i / 7) },
    x_q: { dims: [2, 3], data: Float64Array.from({ length: 6 }, (_, i) => -i / 3) },
  };
}

describe("bundle writer", () => {
  it("round-trips through validation", () => {
    const target = path.join(dir, "b");
    writeBundle(target, header(), tensors());
    const loaded = validateBundle(target);
    expect(loaded.manifest.m).toBe(2);
    expect(loaded.manifest.tokenizer).toBe("byte-v1");
    expect(Array.from(loaded.tensors.x_c.data.slice(0, 3))).toEqual(
      Array.from(Float32Array.from([0, 1 / 7, 2 / 7])),
    );
  });

  it("rejects dims that do not match the payload", () => {
    const target = path.join(dir, "b");
    expect(() =>
      writeBundle(target, header(), {
        x_c: { dims: [4, 3], data: new Float64Array(15) },
      }),
    ).toThrow(/do not match/);
  });

  it("detects payload corruption by checksum", () => {
    const target = path.join(dir, "b");
    writeBundle(target, header(), tensors());
    const payload = path.join(target, "x_c.bin");
    const bytes = fs.readFileSync(payload);
    bytes[0] ^= 0xff;
    fs.writeFileSync(payload, bytes);
    expect(() => validateBundle(target)).toThrow(/checksum/);
  });

  it("detects truncated payloads by length", () => {
    const target = path.join(dir, "b");
    writeBundle(target, header(), tensors());
    const payload = path.join(target, "x_q.bin");
    fs.writeFileSync(payload, fs.readFileSync(payload).subarray(0, 8));
    expect(() => validateBundle(target)).toThrow(/bytes/);
  });

  it("rejects span tables with gaps, citing the range", () => {
    const target = path.join(dir, "b");
    const bad = header();
    bad.spans = [
      { kind: "instruction", owner: "__instruction__", start: 0, end: 2 },
      { kind: "document", owner: "d1", start: 3, end: 5 },
    ];
    writeBundle(target, bad, tensors());
    expect(() => validateBundle(target)).toThrow(/gap over tokens \[2, 3\)/);
  });
});
