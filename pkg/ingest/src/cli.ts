#!/usr/bin/env node
/**
 * graphbuffer-ingest <dataset> --out DIR [--seed S] [--cache DIR] [--mirror URL]
 * graphbuffer-ingest verify <dir>
 *
 * Converts a public citation benchmark (cora, citeseer, pubmed) into the
 * dataset directory format consumed by the training engine, with ten seeded
 * 10/10/80 splits, then verifies the written bytes.
 */

import { join } from "node:path";
import { ensureCached } from "./fetch.js";
import { convert } from "./pipeline.js";
import { verifyDataset } from "./verify.js";

const SUPPORTED = ["cora", "citeseer", "pubmed"];

interface Args {
  positional: string[];
  options: Record<string, string>;
}

function parseArgs(argv: string[]): Args {
  const positional: string[] = [];
  const options: Record<string, string> = {};
  for (let i = 0; i < argv.length; i++) {
    const tok = argv[i];
    if (tok.startsWith("--")) {
      const key = tok.slice(2);
      const value = argv[i + 1];
      if (value === undefined || value.startsWith("--")) {
        throw new Error(`option --${key} needs a value`);
      }
      options[key] = value;
      i++;
    } else {
      positional.push(tok);
    }
  }
  return { positional, options };
}

function printReport(report: ReturnType<typeof verifyDataset>): void {
  console.log(
    `${report.dataset}: ${report.nodes} nodes, ${report.undirectedEdges} undirected edges ` +
      `(${report.edgeEntries} directed entries), ${report.features} features, ` +
      `${report.classes} classes, ${report.splits} splits`,
  );
  for (const issue of report.issues) {
    console.error(`  FAIL ${issue.check}: ${issue.detail}`);
  }
}

export async function main(argv: string[]): Promise<number> {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error((err as Error).message);
    return 2;
  }
  const [command] = args.positional;

  if (command === "verify") {
    const dir = args.positional[1] ?? args.options["dir"];
    if (!dir) {
      console.error("usage: graphbuffer-ingest verify <dir>");
      return 2;
    }
    try {
      const report = verifyDataset(dir);
      printReport(report);
      return report.ok ? 0 : 1;
    } catch (err) {
      console.error(`error: ${(err as Error).message}`);
      return 1;
    }
  }

  if (!command || !SUPPORTED.includes(command)) {
    console.error(
      `usage: graphbuffer-ingest <${SUPPORTED.join("|")}> --out DIR ` +
        `[--seed S] [--cache DIR] [--mirror URL]\n` +
        `       graphbuffer-ingest verify <dir>`,
    );
    return 2;
  }
  const out = args.options["out"];
  if (!out) {
    console.error("--out DIR is required");
    return 2;
  }
  const seed = parseInt(args.options["seed"] ?? "0", 10);
  if (!Number.isFinite(seed)) {
    console.error(`bad --seed value: ${args.options["seed"]}`);
    return 2;
  }
  const cache = args.options["cache"] ?? join(".ingest-cache", command);

  try {
    await ensureCached(command, cache, args.options["mirror"]);
    const report = convert(command, cache, out, seed);
    printReport(report);
    return report.ok ? 0 : 1;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

const isDirectRun = process.argv[1] && import.meta.url.endsWith(process.argv[1].split("/").pop()!);
if (isDirectRun) {
  main(process.argv.slice(2)).then((code) => process.exit(code));
}
