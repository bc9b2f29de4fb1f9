import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";
import { main } from "../src/cli.js";
import { writeDataset } from "../src/format.js";
import { assemble } from "../src/planetoid.js";

const FIX = join(__dirname, "fixtures");

describe("cli", () => {
  it("rejects unknown datasets with usage", async () => {
    expect(await main(["frogs", "--out", "x"])).toBe(2);
  });

  it("requires --out", async () => {
    expect(await main(["cora"])).toBe(2);
  });

  it("rejects dangling option values", async () => {
    expect(await main(["cora", "--out"])).toBe(2);
  });

  it("verify passes on a converted directory", async () => {
    const out = mkdtempSync(join(tmpdir(), "cli-"));
    writeDataset(assemble(join(FIX, "tiny"), "tiny"), out, 0);
    expect(await main(["verify", out])).toBe(0);
  });

  it("verify needs a directory argument", async () => {
    expect(await main(["verify"])).toBe(2);
  });

  it("conversion fails cleanly when offline and uncached", async () => {
    const out = mkdtempSync(join(tmpdir(), "cli-"));
    const cache = mkdtempSync(join(tmpdir(), "cache-"));
    const code = await main([
      "cora", "--out", out, "--cache", cache,
      "--mirror", "https://127.0.0.1:1/definitely-not-here",
    ]);
    expect(code).toBe(1);
  });
});
