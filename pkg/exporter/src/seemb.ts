/**
 * SEEMB1 embedding file, bit-exact: magic "SEEMB1" (6 bytes), u32 LE
 * dimension, u64 LE record count, then per record a u16 LE key length, the
 * UTF-8 key, and dimension * f32 LE components. Keys must be unique.
 */

import { readFileSync, writeFileSync } from "node:fs";

export const MAGIC = Buffer.from("SEEMB1", "ascii");

export class EmbeddingFormatError extends Error {}

export interface EmbeddingRecord {
  key: string;
  vector: Float32Array;
}

export function encodeEmbeddingFile(
  dim: number,
  records: EmbeddingRecord[],
): Buffer {
  const seen = new Set<string>();
  const parts: Buffer[] = [];
  const header = Buffer.alloc(MAGIC.length + 4 + 8);
  MAGIC.copy(header, 0);
  header.writeUInt32LE(dim, MAGIC.length);
  header.writeBigUInt64LE(BigInt(records.length), MAGIC.length + 4);
  parts.push(header);
  for (const { key, vector } of records) {
    if (seen.has(key)) {
      throw new EmbeddingFormatError(`duplicate node key ${JSON.stringify(key)}`);
    }
    seen.add(key);
    if (vector.length !== dim) {
      throw new EmbeddingFormatError(
        `vector for ${JSON.stringify(key)} has ${vector.length} components, expected ${dim}`,
      );
    }
    const keyBytes = Buffer.from(key, "utf-8");
    if (keyBytes.length > 0xffff) {
      throw new EmbeddingFormatError(`node key too long: ${key.slice(0, 60)}...`);
    }
    const record = Buffer.alloc(2 + keyBytes.length + 4 * dim);
    record.writeUInt16LE(keyBytes.length, 0);
    keyBytes.copy(record, 2);
    for (let i = 0; i < dim; i++) {
      record.writeFloatLE(vector[i], 2 + keyBytes.length + 4 * i);
    }
    parts.push(record);
  }
  return Buffer.concat(parts);
}

export function writeEmbeddingFile(
  path: string,
  dim: number,
  records: EmbeddingRecord[],
): void {
  writeFileSync(path, encodeEmbeddingFile(dim, records));
}

export function readEmbeddingFile(path: string): {
  dim: number;
  records: Map<string, Float32Array>;
} {
  const data = readFileSync(path);
  if (data.length < 18 || !data.subarray(0, 6).equals(MAGIC)) {
    throw new EmbeddingFormatError(`${path}: bad magic, not an SEEMB1 file`);
  }
  const dim = data.readUInt32LE(6);
  const count = data.readBigUInt64LE(10);
  let offset = 18;
  const records = new Map<string, Float32Array>();
  for (let i = 0n; i < count; i++) {
    if (offset + 2 > data.length) {
      throw new EmbeddingFormatError(`${path}: truncated record header`);
    }
    const keyLen = data.readUInt16LE(offset);
    offset += 2;
    const end = offset + keyLen + 4 * dim;
    if (end > data.length) {
      throw new EmbeddingFormatError(`${path}: truncated record`);
    }
    const key = data.subarray(offset, offset + keyLen).toString("utf-8");
    offset += keyLen;
    const vector = new Float32Array(dim);
    for (let j = 0; j < dim; j++) {
      vector[j] = data.readFloatLE(offset + 4 * j);
    }
    offset += 4 * dim;
    if (records.has(key)) {
      throw new EmbeddingFormatError(`${path}: duplicate node key ${key}`);
    }
    records.set(key, vector);
  }
  if (offset !== data.length) {
    throw new EmbeddingFormatError(`${path}: trailing bytes after last record`);
  }
  return { dim, records };
}
