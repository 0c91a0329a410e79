/**
 * Exporter CLI.
 *
 * export --model tinyrand-v1:SEED --layer 13 --heads FILE --dataset FILE
 *        --what {hidden|weights|attn} --out DIR
 *        [--rotary on|off] [--capture residual|post_attn_norm]
 *
 * `--heads` names a JSON file containing an array of head indices; it
 * defaults to all heads of the model for attention/weight exports.
 */

import * as fs from "node:fs";

import { loadDataset } from "./dataset.js";
import { exportAttentionMaps, exportHeadWeights, exportHiddenStates } from "./export.js";
import { modelFromIdentifier, type CaptureMode } from "./model.js";

interface Args {
  model: string;
  layer: number;
  heads?: string;
  dataset?: string;
  what: "hidden" | "weights" | "attn";
  out: string;
  rotary: boolean;
  capture: CaptureMode;
}

function parseArgs(argv: string[]): Args {
  if (argv[0] !== "export") {
    throw new Error("usage: export --model ID --layer N [--heads FILE] --dataset FILE --what hidden|weights|attn --out DIR");
  }
  const args: Record<string, string> = {};
  for (let i = 1; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`bad argument ${key}`);
    }
    args[key.slice(2)] = argv[i + 1];
  }
  const what = args.what as Args["what"];
  if (!["hidden", "weights", "attn"].includes(what)) {
    throw new Error("--what must be hidden, weights or attn");
  }
  if (!args.out) throw new Error("--out is required");
  return {
    model: args.model ?? "tinyrand-v1:1",
    layer: args.layer ? Number.parseInt(args.layer, 10) : 13,
    heads: args.heads,
    dataset: args.dataset,
    what,
    out: args.out,
    rotary: (args.rotary ?? "on") !== "off",
    capture: (args.capture as CaptureMode) ?? "residual",
  };
}

export function main(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(String(err));
    return 1;
  }
  try {
    const model = modelFromIdentifier(args.model, args.rotary);
    let headIndices: number[] = [...Array(model.config.nHeads).keys()];
    if (args.heads) {
      headIndices = JSON.parse(fs.readFileSync(args.heads, "utf-8"));
    }
    const samples = args.dataset ? loadDataset(args.dataset) : [];
    const job = {
      model,
      layer: args.layer,
      headIndices,
      samples,
      outDir: args.out,
      capture: args.capture,
    };
    if (args.what === "weights") {
      const dir = exportHeadWeights(job);
      console.log(`wrote head weights (${headIndices.length} heads) to ${dir}`);
      return 0;
    }
    if (samples.length === 0) throw new Error("--dataset is required for this export");
    const outcome = args.what === "hidden" ? exportHiddenStates(job) : exportAttentionMaps(job);
    console.log(`wrote ${outcome.written.length} bundles to ${args.out}`);
    for (const skip of outcome.skipped) {
      console.error(`sample ${skip.index}: skipped (${skip.reason})`);
    }
    return outcome.skipped.length ? 2 : 0;
  } catch (err) {
    console.error(String(err));
    return 1;
  }
}

const isMain = process.argv[1] && import.meta.url.endsWith(process.argv[1].split("/").pop()!);
if (isMain) {
  process.exit(main(process.argv.slice(2)));
}
