/**
 * Deterministic random streams and checksums.
 *
 * Mirrors the consumer library's documented generator exactly: PCG with
 * XSH-RR output (64-bit state, multiplier 0x5851f42d4c957f2d, per-stream
 * odd increment), canonical seeding (state 0, step, add seed, step),
 * 53-bit doubles from consecutive 32-bit outputs, Box-Muller normals
 * emitted cosine-first, and FNV-1a child-seed derivation — so weight and
 * noise streams reproduce bit-for-bit across the two implementations.
 */

const MASK64 = (1n << 64n) - 1n;
const PCG_MULT = 0x5851f42d4c957f2dn;
const FNV_OFFSET = 0xcbf29ce484222325n;
const FNV_PRIME = 0x100000001b3n;

export function fnv1a64(data: Uint8Array): bigint {
  let h = FNV_OFFSET;
  for (const byte of data) {
    h = ((h ^ BigInt(byte)) * FNV_PRIME) & MASK64;
  }
  return h;
}

function fnvUpdate(h: bigint, data: Uint8Array): bigint {
  for (const byte of data) {
    h = ((h ^ BigInt(byte)) * FNV_PRIME) & MASK64;
  }
  return h;
}

/** Collapse labels and integers into a 64-bit child seed (FNV-1a). */
export function mixSeed(...parts: (number | bigint | string)[]): bigint {
  let h = FNV_OFFSET;
  for (const part of parts) {
    if (typeof part === "string") {
      h = fnvUpdate(h, new TextEncoder().encode(part));
    } else {
      const value = BigInt(part) & MASK64;
      const bytes = new Uint8Array(8);
      for (let i = 0; i < 8; i++) {
        bytes[i] = Number((value >> BigInt(8 * i)) & 0xffn);
      }
      h = fnvUpdate(h, bytes);
    }
  }
  return h;
}

export class PcgStream {
  private state: bigint;
  private readonly inc: bigint;

  constructor(seed: number | bigint, streamId: number | bigint = 0) {
    const id = BigInt(streamId) & ((1n << 63n) - 1n);
    this.inc = ((id << 1n) | 1n) & MASK64;
    let state = (0n * PCG_MULT + this.inc) & MASK64;
    state = (state + (BigInt(seed) & MASK64)) & MASK64;
    this.state = (state * PCG_MULT + this.inc) & MASK64;
  }

  /** Child stream keyed by (seed, labels); independent of draw order. */
  static derived(seed: number | bigint, ...labels: (number | string)[]): PcgStream {
    return new PcgStream(mixSeed(seed, ...labels), mixSeed(...labels, "stream"));
  }

  nextU32(): number {
    const s = this.state;
    this.state = (s * PCG_MULT + this.inc) & MASK64;
    const xorshifted = Number((((s >> 18n) ^ s) >> 27n) & 0xffffffffn);
    const rot = Number(s >> 59n);
    return ((xorshifted >>> rot) | (xorshifted << ((32 - rot) & 31))) >>> 0;
  }

  /** Double in [0, 1) from the top 53 bits of two 32-bit draws. */
  uniform(): number {
    const hi = BigInt(this.nextU32());
    const lo = BigInt(this.nextU32());
    return Number(((hi << 32n) | lo) >> 11n) * 2 ** -53;
  }

  /** Standard normals via Box-Muller pairs, cosine value first. */
  gaussians(count: number): Float64Array {
    const pairs = Math.ceil(count / 2);
    const out = new Float64Array(2 * pairs);
    for (let p = 0; p < pairs; p++) {
      const u1 = this.uniform() + 2 ** -53;
      const u2 = this.uniform();
      const r = Math.sqrt(-2 * Math.log(u1));
      const theta = 2 * Math.PI * u2;
      out[2 * p] = r * Math.cos(theta);
      out[2 * p + 1] = r * Math.sin(theta);
    }
    return out.subarray(0, count);
  }
}
