import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";
import { writeDataset } from "../src/format.js";
import { assemble } from "../src/planetoid.js";
import { randomSplit, SplitMix32, tenSplits } from "../src/rng.js";

const FIX = join(__dirname, "fixtures");

function tmp(): string {
  return mkdtempSync(join(tmpdir(), "ingest-"));
}

describe("split generator", () => {
  it("is deterministic per seed", () => {
    const a = randomSplit(100, 5);
    const b = randomSplit(100, 5);
    expect(a).toEqual(b);
    expect(randomSplit(100, 6)).not.toEqual(a);
  });

  it("produces 10/10/80 disjoint covering splits", () => {
    const split = randomSplit(97, 3);
    expect(split.train.length).toBe(10);
    expect(split.val.length).toBe(10);
    expect(split.test.length).toBe(77);
    const all = [...split.train, ...split.val, ...split.test];
    expect(new Set(all).size).toBe(97);
  });

  it("emits ten named splits", () => {
    const splits = tenSplits(50, 9);
    expect(Object.keys(splits)).toEqual(
      Array.from({ length: 10 }, (_, k) => `split_${k}`),
    );
    expect(splits.split_0).not.toEqual(splits.split_1);
  });

  it("rng draws are unbiased over small ranges", () => {
    const rng = new SplitMix32(1);
    const counts = [0, 0, 0];
    for (let i = 0; i < 30000; i++) counts[rng.nextBelow(3)]++;
    for (const c of counts) expect(Math.abs(c - 10000)).toBeLessThan(400);
  });
});

describe("dataset directory writer", () => {
  it("writes the exact byte format", () => {
    const g = assemble(join(FIX, "tiny"), "tiny");
    const out = tmp();
    const meta = writeDataset(g, out, 7);

    expect(JSON.parse(readFileSync(join(out, "meta.json"), "utf-8"))).toEqual({
      name: "tiny", num_nodes: 8, num_features: 3, num_classes: 2,
      source_self_loops: 1,
    });
    expect(meta.num_nodes).toBe(8);

    const edges = readFileSync(join(out, "edges.bin"));
    expect(edges.length).toBe(8 * g.edges.length);
    expect(edges.readUInt32LE(0)).toBe(0);
    expect(edges.readUInt32LE(4)).toBe(1);

    const feats = readFileSync(join(out, "features.bin"));
    expect(feats.length).toBe(4 * 8 * 3);
    expect(feats.readFloatLE(0)).toBeCloseTo(g.features[0], 6);

    const labels = readFileSync(join(out, "labels.bin"));
    expect(labels.length).toBe(16);
    expect(labels.readUInt16LE(0)).toBe(g.labels[0]);

    const splits = JSON.parse(readFileSync(join(out, "splits.json"), "utf-8"));
    expect(Object.keys(splits).length).toBe(10);
  });

  it("is byte-identical for the same seed and differs across seeds", () => {
    const g = assemble(join(FIX, "tiny"), "tiny");
    const a = tmp();
    const b = tmp();
    const c = tmp();
    writeDataset(g, a, 3);
    writeDataset(g, b, 3);
    writeDataset(g, c, 4);
    for (const name of ["meta.json", "edges.bin", "features.bin", "labels.bin", "splits.json"]) {
      expect(readFileSync(join(a, name)).equals(readFileSync(join(b, name)))).toBe(true);
    }
    expect(
      readFileSync(join(a, "splits.json")).equals(readFileSync(join(c, "splits.json"))),
    ).toBe(false);
  });
});
