/**
 * Assemble a citation graph from its eight distribution files.
 *
 * The sources ship labeled features (x), test features (tx), all-but-test
 * features (allx), matching one-hot label blocks (y/ty/ally), an adjacency
 * dict (graph), and the permuted test ids (test.index). Feature and label
 * rows for test nodes must be re-ordered into graph order; citeseer's test
 * range has gaps (papers cited but never indexed) which become zero-feature
 * nodes labeled by argmax convention (class 0).
 */

import { readFileSync } from "node:fs";
import { join } from "node:path";
import { CsrPayload, NdArray, PickleError, csrToDense, loads, ndarrayToNumbers } from "./pickle.js";

export interface CitationGraph {
  name: string;
  numNodes: number;
  numFeatures: number;
  numClasses: number;
  /** row-major float32-representable feature matrix */
  features: Float64Array;
  labels: Uint16Array;
  /** canonical undirected edges, u < v, deduplicated, no self-loops */
  edges: Array<[number, number]>;
  /** unique self-citations dropped during canonicalization */
  sourceSelfLoops: number;
}

const PARTS = ["x", "y", "tx", "ty", "allx", "ally", "graph", "test.index"] as const;

export function partFileNames(dataset: string): string[] {
  return PARTS.map((p) => `ind.${dataset}.${p}`);
}

function loadPickle(dir: string, dataset: string, part: string): unknown {
  const path = join(dir, `ind.${dataset}.${part}`);
  return loads(new Uint8Array(readFileSync(path)));
}

function asDense(value: unknown, what: string): { rows: number; cols: number; values: Float64Array } {
  const v = value as CsrPayload | NdArray;
  if (v && (v as CsrPayload).kind === "csr") return csrToDense(v as CsrPayload);
  if (v && (v as NdArray).kind === "ndarray") {
    const arr = v as NdArray;
    if (arr.shape.length !== 2) throw new PickleError(`${what}: expected a matrix`);
    return { rows: arr.shape[0], cols: arr.shape[1], values: Float64Array.from(ndarrayToNumbers(arr)) };
  }
  throw new PickleError(`${what}: expected a csr matrix or ndarray`);
}

function parseTestIndex(dir: string, dataset: string): number[] {
  const text = readFileSync(join(dir, `ind.${dataset}.test.index`), "utf-8");
  return text
    .split(/\r?\n/)
    .filter((l) => l.trim().length > 0)
    .map((l) => {
      const n = parseInt(l, 10);
      if (!Number.isFinite(n)) throw new Error(`bad test index line: ${l}`);
      return n;
    });
}

function argmaxRows(rows: number, cols: number, values: Float64Array): Uint16Array {
  const out = new Uint16Array(rows);
  for (let r = 0; r < rows; r++) {
    let best = 0;
    let bestVal = values[r * cols];
    for (let c = 1; c < cols; c++) {
      const v = values[r * cols + c];
      if (v > bestVal) {
        bestVal = v;
        best = c;
      }
    }
    out[r] = best;
  }
  return out;
}

export function assemble(dir: string, dataset: string): CitationGraph {
  const allx = asDense(loadPickle(dir, dataset, "allx"), "allx");
  const tx = asDense(loadPickle(dir, dataset, "tx"), "tx");
  const ally = asDense(loadPickle(dir, dataset, "ally"), "ally");
  const ty = asDense(loadPickle(dir, dataset, "ty"), "ty");
  const graphDict = loadPickle(dir, dataset, "graph") as Map<number, number[]>;
  const testIdx = parseTestIndex(dir, dataset);

  if (allx.cols !== tx.cols) throw new Error("allx and tx disagree on feature width");
  if (ally.cols !== ty.cols) throw new Error("ally and ty disagree on class count");
  const d = allx.cols;
  const c = ally.cols;

  const minTest = Math.min(...testIdx);
  const maxTest = Math.max(...testIdx);
  const span = maxTest - minTest + 1;
  const numNodes = allx.rows + span;

  // lay out features/labels in graph order: allx rows land at 0..allx.rows-1,
  // the test block spans [minTest, maxTest] with gaps left as zeros
  const features = new Float64Array(numNodes * d);
  features.set(allx.values, 0);
  const oneHot = new Float64Array(numNodes * c);
  oneHot.set(ally.values, 0);
  const sorted = [...testIdx].sort((a, b) => a - b);
  if (sorted.length !== tx.rows) throw new Error("test.index length does not match tx rows");
  for (let k = 0; k < sorted.length; k++) {
    const node = sorted[k];
    features.set(tx.values.subarray(k * d, (k + 1) * d), node * d);
    oneHot.set(ty.values.subarray(k * c, (k + 1) * c), node * c);
  }
  const labels = argmaxRows(numNodes, c, oneHot);

  // canonical undirected edge set from the adjacency dict
  const seen = new Set<number>();
  const selfLoops = new Set<number>();
  const edges: Array<[number, number]> = [];
  for (const [u, neighbors] of graphDict) {
    if (u < 0 || u >= numNodes) throw new Error(`graph key ${u} out of range`);
    for (const v of neighbors) {
      if (v < 0 || v >= numNodes) throw new Error(`neighbor ${v} out of range`);
      if (u === v) {
        selfLoops.add(u);
        continue;
      }
      const lo = Math.min(u, v);
      const hi = Math.max(u, v);
      const key = lo * numNodes + hi;
      if (!seen.has(key)) {
        seen.add(key);
        edges.push([lo, hi]);
      }
    }
  }
  edges.sort((a, b) => (a[0] - b[0]) || (a[1] - b[1]));

  return {
    name: dataset,
    numNodes,
    numFeatures: d,
    numClasses: c,
    features,
    labels,
    edges,
    sourceSelfLoops: selfLoops.size,
  };
}
