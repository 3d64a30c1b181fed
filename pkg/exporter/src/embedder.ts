/**
 * Embedding backends. The transformer backend runs a pretrained sentence
 * transformer (all-MiniLM-L6-v2 by default) through transformers.js with
 * mean pooling and normalization; texts beyond the model's token limit are
 * truncated by the model's own tokenizer. The deterministic backend exists
 * for offline tests and air-gapped runs: right shape and unit norm, no
 * semantics.
 */

import { createHash } from "node:crypto";

export interface Embedder {
  readonly dim: number;
  readonly modelName: string;
  embed(texts: string[]): Promise<Float32Array[]>;
}

export const DEFAULT_MODEL = "Xenova/all-MiniLM-L6-v2";

export function l2Normalize(vector: Float32Array): Float32Array {
  let sum = 0;
  for (let i = 0; i < vector.length; i++) {
    sum += vector[i] * vector[i];
  }
  const norm = Math.sqrt(sum);
  if (norm === 0) {
    return vector;
  }
  const out = new Float32Array(vector.length);
  for (let i = 0; i < vector.length; i++) {
    out[i] = vector[i] / norm;
  }
  return out;
}

export class TransformerEmbedder implements Embedder {
  private constructor(
    readonly modelName: string,
    readonly dim: number,
    private readonly extractor: (
      texts: string[],
      options: { pooling: "mean"; normalize: boolean },
    ) => Promise<{ data: Float32Array | number[]; dims: number[] }>,
  ) {}

  static async create(
    modelName: string = DEFAULT_MODEL,
    dim = 384,
  ): Promise<TransformerEmbedder> {
    const { pipeline } = await import("@huggingface/transformers");
    const extractor = (await pipeline("feature-extraction", modelName)) as never;
    return new TransformerEmbedder(modelName, dim, extractor);
  }

  async embed(texts: string[]): Promise<Float32Array[]> {
    const output = await this.extractor(texts, {
      pooling: "mean",
      normalize: true,
    });
    const flat = Float32Array.from(output.data as ArrayLike<number>);
    const width = output.dims[output.dims.length - 1];
    if (width !== this.dim) {
      throw new Error(
        `model ${this.modelName} emits ${width}-d vectors, expected ${this.dim}`,
      );
    }
    const out: Float32Array[] = [];
    for (let i = 0; i < texts.length; i++) {
      out.push(l2Normalize(flat.subarray(i * width, (i + 1) * width)));
    }
    return out;
  }
}

export class DeterministicStubEmbedder implements Embedder {
  readonly modelName: string;

  constructor(readonly dim = 384) {
    this.modelName = `deterministic-stub-${dim}`;
  }

  private vectorFor(text: string): Float32Array {
    const out = new Float32Array(this.dim);
    const seed = createHash("sha256").update(text, "utf-8").digest();
    let block = seed;
    let produced = 0;
    let counter = 0;
    while (produced < this.dim) {
      block = createHash("sha256")
        .update(seed)
        .update(String(counter++))
        .digest();
      for (let i = 0; i + 1 < block.length && produced < this.dim; i += 2) {
        const raw = block.readUInt16LE(i);
        out[produced++] = raw / 32767.5 - 1.0;
      }
    }
    return l2Normalize(out);
  }

  async embed(texts: string[]): Promise<Float32Array[]> {
    return texts.map((t) => this.vectorFor(t));
  }
}
