#!/usr/bin/env node
/** CLI: segnn-export --corpus DIR --out FILE [--model NAME] [--batch-size N]. */

import { parseArgs } from "node:util";

import {
  DEFAULT_MODEL,
  DeterministicStubEmbedder,
  Embedder,
  TransformerEmbedder,
} from "./embedder.js";
import { runExport } from "./export.js";

const USAGE = `usage: segnn-export --corpus DIR --out FILE [options]

options:
  --corpus DIR       graph corpus directory (graphs.dat + manifest.json)
  --out FILE         SEEMB1 output path (a .report.json sidecar is written too)
  --model NAME       sentence-transformer model (default ${DEFAULT_MODEL})
  --batch-size N     inference batch size (default 32)
  --dim N            embedding width (default 384, must match the model)
  --backend KIND     transformer | stub (stub = offline deterministic vectors)
  --help             show this message
`;

async function main(): Promise<number> {
  let values;
  try {
    ({ values } = parseArgs({
      options: {
        corpus: { type: "string" },
        out: { type: "string" },
        model: { type: "string", default: DEFAULT_MODEL },
        "batch-size": { type: "string", default: "32" },
        dim: { type: "string", default: "384" },
        backend: { type: "string", default: "transformer" },
        help: { type: "boolean", default: false },
      },
    }));
  } catch (err) {
    console.error((err as Error).message);
    console.error(USAGE);
    return 1;
  }
  if (values.help) {
    console.log(USAGE);
    return 0;
  }
  if (!values.corpus || !values.out) {
    console.error("--corpus and --out are required");
    console.error(USAGE);
    return 1;
  }
  const dim = Number(values.dim);
  const batchSize = Number(values["batch-size"]);
  if (!Number.isInteger(dim) || dim < 1 || !Number.isInteger(batchSize) || batchSize < 1) {
    console.error("--dim and --batch-size must be positive integers");
    return 1;
  }
  let embedder: Embedder;
  try {
    if (values.backend === "transformer") {
      embedder = await TransformerEmbedder.create(values.model, dim);
    } else if (values.backend === "stub") {
      embedder = new DeterministicStubEmbedder(dim);
    } else {
      console.error(`unknown backend ${values.backend}; use transformer or stub`);
      return 1;
    }
  } catch (err) {
    console.error(`model load failure: ${(err as Error).message}`);
    return 1;
  }
  try {
    const report = await runExport({
      corpusDir: values.corpus,
      outPath: values.out,
      embedder,
      batchSize,
    });
    console.log(
      `exported ${report.count} embeddings (d=${report.dim}, model=${report.model}) to ${values.out}`,
    );
    return 0;
  } catch (err) {
    console.error(`export failed: ${(err as Error).message}`);
    return 1;
  }
}

main().then((code) => {
  process.exitCode = code;
});
