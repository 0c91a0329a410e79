/**
 * Byte-level tokenizer: one token per UTF-8 byte, vocabulary 256.
 *
 * Deliberately trivial so that token counts, span offsets, and prompt
 * reconstruction are exact without any vocabulary files.
 */

export const TOKENIZER_NAME = "byte-v1";
export const VOCAB_SIZE = 256;

const encoder = new TextEncoder();

export function encode(text: string): Uint8Array {
  return encoder.encode(text);
}

export function tokenCount(text: string): number {
  return encode(text).length;
}
