/**
 * Reader for the graph-corpus directory the pipeline persists:
 * graphs.dat holds length-prefixed binary records (u32 LE payload length,
 * version byte, payload, u32 LE CRC32 of the payload) and manifest.json
 * carries the corpus metadata.
 */

import { readFileSync } from "node:fs";
import { join } from "node:path";

export const FORMAT_VERSION = 1;

export const NODE_LABELS = ["Question", "Answer", "Comment", "User"] as const;
export type NodeLabel = (typeof NODE_LABELS)[number];
export const EDGE_LABELS = ["POSTS", "ANSWERS", "COMMENTS"] as const;
export type EdgeLabel = (typeof EDGE_LABELS)[number];

export interface GraphNode {
  label: NodeLabel;
  id: string;
  text: string;
}

export interface GraphEdge {
  label: EdgeLabel;
  source: number;
  target: number;
}

export interface CommGraph {
  questionId: bigint;
  unresolved: boolean;
  nodes: GraphNode[];
  edges: GraphEdge[];
}

export interface Manifest {
  format_version: number;
  community: string;
  graph_count: number;
  label_counts: { resolved: number; unresolved: number };
}

export class CorpusFormatError extends Error {}

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

/** IEEE CRC32, identical to Python's zlib.crc32. */
export function crc32(data: Uint8Array): number {
  let crc = 0xffffffff;
  for (let i = 0; i < data.length; i++) {
    crc = CRC_TABLE[(crc ^ data[i]) & 0xff] ^ (crc >>> 8);
  }
  return (crc ^ 0xffffffff) >>> 0;
}

const DECODER = new TextDecoder("utf-8", { fatal: true });

class Cursor {
  offset = 0;
  constructor(
    private readonly view: DataView,
    private readonly bytes: Uint8Array,
  ) {}

  private need(n: number, what: string) {
    if (this.offset + n > this.bytes.length) {
      throw new CorpusFormatError(`truncated ${what} at offset ${this.offset}`);
    }
  }

  u8(what: string): number {
    this.need(1, what);
    return this.view.getUint8(this.offset++);
  }

  u16(what: string): number {
    this.need(2, what);
    const v = this.view.getUint16(this.offset, true);
    this.offset += 2;
    return v;
  }

  u32(what: string): number {
    this.need(4, what);
    const v = this.view.getUint32(this.offset, true);
    this.offset += 4;
    return v;
  }

  u64(what: string): bigint {
    this.need(8, what);
    const v = this.view.getBigUint64(this.offset, true);
    this.offset += 8;
    return v;
  }

  utf8(length: number, what: string): string {
    this.need(length, what);
    const out = DECODER.decode(
      this.bytes.subarray(this.offset, this.offset + length),
    );
    this.offset += length;
    return out;
  }
}

function decodePayload(payload: Uint8Array): CommGraph {
  const cursor = new Cursor(
    new DataView(payload.buffer, payload.byteOffset, payload.byteLength),
    payload,
  );
  const questionId = cursor.u64("question id");
  const unresolved = cursor.u8("label") !== 0;
  const nodeCount = cursor.u32("node count");
  const nodes: GraphNode[] = [];
  for (let i = 0; i < nodeCount; i++) {
    const code = cursor.u8("node label");
    if (code >= NODE_LABELS.length) {
      throw new CorpusFormatError(`unknown node label code ${code}`);
    }
    const idLen = cursor.u16("node id length");
    const id = cursor.utf8(idLen, "node id");
    const textLen = cursor.u32("node text length");
    const text = cursor.utf8(textLen, "node text");
    nodes.push({ label: NODE_LABELS[code], id, text });
  }
  const edgeCount = cursor.u32("edge count");
  const edges: GraphEdge[] = [];
  for (let i = 0; i < edgeCount; i++) {
    const code = cursor.u8("edge label");
    if (code >= EDGE_LABELS.length) {
      throw new CorpusFormatError(`unknown edge label code ${code}`);
    }
    edges.push({
      label: EDGE_LABELS[code],
      source: cursor.u32("edge source"),
      target: cursor.u32("edge target"),
    });
  }
  if (cursor.offset !== payload.length) {
    throw new CorpusFormatError("trailing bytes in graph payload");
  }
  return { questionId, unresolved, nodes, edges };
}

export function decodeRecords(data: Uint8Array): CommGraph[] {
  const graphs: CommGraph[] = [];
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  let offset = 0;
  while (offset < data.length) {
    if (offset + 5 > data.length) {
      throw new CorpusFormatError("truncated record header");
    }
    const length = view.getUint32(offset, true);
    const version = view.getUint8(offset + 4);
    if (version !== FORMAT_VERSION) {
      throw new CorpusFormatError(`unsupported graph format version ${version}`);
    }
    const start = offset + 5;
    const end = start + length + 4;
    if (end > data.length) {
      throw new CorpusFormatError(
        `record claims ${length} payload bytes, only ${data.length - start - 4} left`,
      );
    }
    const payload = data.subarray(start, start + length);
    const expected = view.getUint32(start + length, true);
    if (crc32(payload) !== expected) {
      throw new CorpusFormatError("CRC32 mismatch in graph record");
    }
    graphs.push(decodePayload(payload));
    offset = end;
  }
  return graphs;
}

export function readCorpus(dir: string): { manifest: Manifest; graphs: CommGraph[] } {
  const manifest = JSON.parse(
    readFileSync(join(dir, "manifest.json"), "utf-8"),
  ) as Manifest;
  const graphs = decodeRecords(readFileSync(join(dir, "graphs.dat")));
  if (graphs.length !== manifest.graph_count) {
    throw new CorpusFormatError(
      `manifest says ${manifest.graph_count} graphs, file holds ${graphs.length}`,
    );
  }
  return { manifest, graphs };
}

export function nodeKey(node: GraphNode): string {
  return `${node.label}:${node.id}`;
}

/** Unique (key, text) pairs in first-seen order across the corpus. */
export function uniqueNodeRecords(
  graphs: CommGraph[],
): { key: string; text: string }[] {
  const seen = new Set<string>();
  const out: { key: string; text: string }[] = [];
  for (const g of graphs) {
    for (const node of g.nodes) {
      const key = nodeKey(node);
      if (!seen.has(key)) {
        seen.add(key);
        out.push({ key, text: node.text });
      }
    }
  }
  return out;
}
