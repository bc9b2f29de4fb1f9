/**
 * Download the distribution files into a cache directory. Files already in
 * the cache are never re-fetched, so fully seeded caches work offline.
 */

import { existsSync, mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";
import { partFileNames } from "./planetoid.js";

export const DEFAULT_MIRROR =
  "https://github.com/kimiyoung/planetoid/raw/master/data";

export class FetchError extends Error {}

async function fetchOne(url: string, dest: string): Promise<void> {
  let res: Response;
  try {
    res = await fetch(url);
  } catch (err) {
    throw new FetchError(`cannot reach ${url}: ${(err as Error).message}`);
  }
  if (!res.ok) {
    throw new FetchError(`${url} answered ${res.status} ${res.statusText}`);
  }
  const body = Buffer.from(await res.arrayBuffer());
  if (body.length === 0) {
    throw new FetchError(`${url} returned an empty body`);
  }
  writeFileSync(dest, body);
}

/** Ensure all eight part files for a dataset exist in the cache. */
export async function ensureCached(
  dataset: string,
  cacheDir: string,
  mirror: string = DEFAULT_MIRROR,
): Promise<string> {
  mkdirSync(cacheDir, { recursive: true });
  for (const name of partFileNames(dataset)) {
    const dest = join(cacheDir, name);
    if (existsSync(dest)) continue;
    await fetchOne(`${mirror}/${name}`, dest);
  }
  return cacheDir;
}
