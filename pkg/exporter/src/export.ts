/**
 * Corpus to embedding-file export: one record per unique node key, vectors
 * L2-normalized, output bit-identical across re-runs of the same model.
 * A sidecar JSON report records the model and batch settings (the SEEMB1
 * header itself is fixed by the reader contract and carries no metadata).
 */

import { writeFileSync } from "node:fs";

import { readCorpus, uniqueNodeRecords } from "./corpus.js";
import { Embedder, l2Normalize } from "./embedder.js";
import { EmbeddingRecord, writeEmbeddingFile } from "./seemb.js";

export interface ExportJob {
  corpusDir: string;
  outPath: string;
  embedder: Embedder;
  batchSize: number;
}

export interface ExportReport {
  model: string;
  dim: number;
  count: number;
  batchSize: number;
  community: string;
  graphCount: number;
  truncation: string;
}

export async function runExport(job: ExportJob): Promise<ExportReport> {
  if (job.batchSize < 1) {
    throw new Error(`batch size must be >= 1, got ${job.batchSize}`);
  }
  const { manifest, graphs } = readCorpus(job.corpusDir);
  const nodes = uniqueNodeRecords(graphs);
  const records: EmbeddingRecord[] = [];
  for (let start = 0; start < nodes.length; start += job.batchSize) {
    const batch = nodes.slice(start, start + job.batchSize);
    const vectors = await job.embedder.embed(batch.map((n) => n.text));
    if (vectors.length !== batch.length) {
      throw new Error(
        `embedder returned ${vectors.length} vectors for ${batch.length} texts`,
      );
    }
    for (let i = 0; i < batch.length; i++) {
      records.push({ key: batch[i].key, vector: l2Normalize(vectors[i]) });
    }
  }
  writeEmbeddingFile(job.outPath, job.embedder.dim, records);
  const report: ExportReport = {
    model: job.embedder.modelName,
    dim: job.embedder.dim,
    count: records.length,
    batchSize: job.batchSize,
    community: manifest.community,
    graphCount: manifest.graph_count,
    truncation: "texts beyond the model token limit are truncated by the model tokenizer",
  };
  writeFileSync(
    `${job.outPath}.report.json`,
    JSON.stringify(report, Object.keys(report).sort(), 2) + "\n",
  );
  return report;
}
