/**
 * The cache-to-directory conversion used by the CLI and the tests: assemble
 * the citation graph from its part files, write the dataset directory with
 * ten seeded splits, and verify the written bytes.
 */

import { writeDataset } from "./format.js";
import { assemble } from "./planetoid.js";
import { VerificationReport, verifyDataset } from "./verify.js";

export function convert(dataset: string, cacheDir: string, outDir: string, seed: number): VerificationReport {
  const graph = assemble(cacheDir, dataset);
  writeDataset(graph, outDir, seed);
  return verifyDataset(outDir);
}
