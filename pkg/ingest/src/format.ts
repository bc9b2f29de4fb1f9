/**
 * The dataset directory format, written byte for byte:
 *   meta.json     {"name", "num_nodes", "num_features", "num_classes", ...}
 *   edges.bin     (u: uint32 LE, v: uint32 LE) per undirected edge
 *   features.bin  num_nodes x num_features float32 LE, row-major
 *   labels.bin    num_nodes uint16 LE
 *   splits.json   {"split_k": {train, val, test}} for k = 0..9
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";
import { CitationGraph } from "./planetoid.js";
import { Split, tenSplits } from "./rng.js";

export interface DatasetMeta {
  name: string;
  num_nodes: number;
  num_features: number;
  num_classes: number;
  source_self_loops: number;
}

function stableJson(value: unknown): string {
  // stringify with sorted keys, mirroring the loader side's canonical form
  const sort = (v: unknown): unknown => {
    if (Array.isArray(v)) return v.map(sort);
    if (v && typeof v === "object") {
      const entries = Object.entries(v as Record<string, unknown>).sort(([a], [b]) =>
        a < b ? -1 : a > b ? 1 : 0,
      );
      return Object.fromEntries(entries.map(([k, x]) => [k, sort(x)]));
    }
    return v;
  };
  return JSON.stringify(sort(value), null, 2) + "\n";
}

export function writeDataset(graph: CitationGraph, outDir: string, seedBase: number): DatasetMeta {
  mkdirSync(outDir, { recursive: true });

  const meta: DatasetMeta = {
    name: graph.name,
    num_nodes: graph.numNodes,
    num_features: graph.numFeatures,
    num_classes: graph.numClasses,
    source_self_loops: graph.sourceSelfLoops,
  };
  writeFileSync(join(outDir, "meta.json"), stableJson(meta));

  const edgeBuf = Buffer.alloc(8 * graph.edges.length);
  graph.edges.forEach(([u, v], i) => {
    edgeBuf.writeUInt32LE(u, 8 * i);
    edgeBuf.writeUInt32LE(v, 8 * i + 4);
  });
  writeFileSync(join(outDir, "edges.bin"), edgeBuf);

  const feat = Buffer.alloc(4 * graph.features.length);
  for (let i = 0; i < graph.features.length; i++) {
    feat.writeFloatLE(Math.fround(graph.features[i]), 4 * i);
  }
  writeFileSync(join(outDir, "features.bin"), feat);

  const lab = Buffer.alloc(2 * graph.labels.length);
  for (let i = 0; i < graph.labels.length; i++) {
    lab.writeUInt16LE(graph.labels[i], 2 * i);
  }
  writeFileSync(join(outDir, "labels.bin"), lab);

  const splits: Record<string, Split> = tenSplits(graph.numNodes, seedBase);
  writeFileSync(join(outDir, "splits.json"), stableJson(splits));
  return meta;
}
