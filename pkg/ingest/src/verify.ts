/**
 * Recompute every statistic from the written binaries and compare against
 * meta.json, the published figures (when the dataset is known), and the split
 * contract: disjoint lists covering valid ids in 10/10/80 proportions.
 */

import { readFileSync } from "node:fs";
import { join } from "node:path";

export interface VerificationIssue {
  check: string;
  detail: string;
}

export interface VerificationReport {
  dataset: string;
  nodes: number;
  undirectedEdges: number;
  /** 2 * undirected + source self-loops: the published accounting */
  edgeEntries: number;
  features: number;
  classes: number;
  splits: number;
  issues: VerificationIssue[];
  ok: boolean;
}

/** Published statistics, edge figures counted as directed entries of the
 * symmetric adjacency plus residual self-citations. */
export const KNOWN_STATS: Record<string, { nodes: number; features: number; classes: number; edgeEntries: number }> = {
  cora: { nodes: 2708, features: 1433, classes: 7, edgeEntries: 10556 },
  citeseer: { nodes: 3327, features: 3703, classes: 6, edgeEntries: 9228 },
  pubmed: { nodes: 19717, features: 500, classes: 3, edgeEntries: 88651 },
};

export function verifyDataset(dir: string): VerificationReport {
  const issues: VerificationIssue[] = [];
  const meta = JSON.parse(readFileSync(join(dir, "meta.json"), "utf-8"));
  const n: number = meta.num_nodes;
  const d: number = meta.num_features;
  const c: number = meta.num_classes;

  const edgesRaw = readFileSync(join(dir, "edges.bin"));
  if (edgesRaw.length % 8 !== 0) {
    issues.push({ check: "edges-length", detail: `${edgesRaw.length} bytes is not a pair multiple` });
  }
  const numEdges = Math.floor(edgesRaw.length / 8);
  const seen = new Set<number>();
  for (let i = 0; i < numEdges; i++) {
    const u = edgesRaw.readUInt32LE(8 * i);
    const v = edgesRaw.readUInt32LE(8 * i + 4);
    if (u >= n || v >= n) {
      issues.push({ check: "edge-range", detail: `edge ${i} endpoint out of range` });
      break;
    }
    if (u === v) {
      issues.push({ check: "self-loop", detail: `edge ${i} is a self-loop` });
      break;
    }
    const key = Math.min(u, v) * n + Math.max(u, v);
    if (seen.has(key)) {
      issues.push({ check: "duplicate-edge", detail: `edge ${i} repeats an earlier pair` });
      break;
    }
    seen.add(key);
  }

  const featRaw = readFileSync(join(dir, "features.bin"));
  if (featRaw.length !== 4 * n * d) {
    issues.push({
      check: "features-length",
      detail: `${featRaw.length} bytes, expected ${4 * n * d}`,
    });
  }

  const labRaw = readFileSync(join(dir, "labels.bin"));
  if (labRaw.length !== 2 * n) {
    issues.push({ check: "labels-length", detail: `${labRaw.length} bytes, expected ${2 * n}` });
  } else {
    let maxLabel = 0;
    for (let i = 0; i < n; i++) maxLabel = Math.max(maxLabel, labRaw.readUInt16LE(2 * i));
    if (maxLabel >= c) {
      issues.push({ check: "label-range", detail: `label ${maxLabel} with ${c} classes` });
    }
  }

  const splits = JSON.parse(readFileSync(join(dir, "splits.json"), "utf-8"));
  const splitNames = Object.keys(splits);
  for (const name of splitNames) {
    const { train, val, test } = splits[name];
    const all: number[] = [...train, ...val, ...test];
    if (new Set(all).size !== all.length) {
      issues.push({ check: "split-disjoint", detail: `${name} lists overlap` });
    }
    if (all.some((i) => i < 0 || i >= n)) {
      issues.push({ check: "split-range", detail: `${name} id out of range` });
    }
    const tenth = 0.10 * n;
    if (Math.abs(train.length - tenth) > 1 || Math.abs(val.length - tenth) > 1) {
      issues.push({
        check: "split-proportions",
        detail: `${name}: train ${train.length}, val ${val.length} vs expected ~${tenth}`,
      });
    }
    if (train.length + val.length + test.length !== n) {
      issues.push({ check: "split-cover", detail: `${name} does not cover every node` });
    }
  }

  const selfLoops: number = meta.source_self_loops ?? 0;
  const edgeEntries = 2 * numEdges + selfLoops;
  const known = KNOWN_STATS[meta.name];
  if (known) {
    if (n !== known.nodes) issues.push({ check: "nodes", detail: `${n} != ${known.nodes}` });
    if (d !== known.features) issues.push({ check: "features", detail: `${d} != ${known.features}` });
    if (c !== known.classes) issues.push({ check: "classes", detail: `${c} != ${known.classes}` });
    if (edgeEntries !== known.edgeEntries) {
      issues.push({ check: "edges", detail: `${edgeEntries} != ${known.edgeEntries}` });
    }
  }

  return {
    dataset: meta.name,
    nodes: n,
    undirectedEdges: numEdges,
    edgeEntries,
    features: d,
    classes: c,
    splits: splitNames.length,
    issues,
    ok: issues.length === 0,
  };
}
