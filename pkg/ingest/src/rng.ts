/**
 * Deterministic PRNG for reproducible splits: splitmix32 core with a
 * Fisher-Yates shuffle. The byte stream depends only on the seed, never on
 * the platform, so two conversions with the same seed are identical.
 */

export class SplitMix32 {
  private state: number;

  constructor(seed: number) {
    this.state = seed >>> 0;
  }

  /** next uint32 */
  nextU32(): number {
    this.state = (this.state + 0x9e3779b9) >>> 0;
    let z = this.state;
    z ^= z >>> 16;
    z = Math.imul(z, 0x21f0aaad) >>> 0;
    z ^= z >>> 15;
    z = Math.imul(z, 0x735a2d97) >>> 0;
    z ^= z >>> 15;
    return z >>> 0;
  }

  /** uniform integer in [0, n) without modulo bias */
  nextBelow(n: number): number {
    if (n <= 0) throw new Error("nextBelow needs a positive bound");
    const limit = Math.floor(0x100000000 / n) * n;
    for (;;) {
      const v = this.nextU32();
      if (v < limit) return v % n;
    }
  }

  shuffle(items: number[]): number[] {
    for (let i = items.length - 1; i > 0; i--) {
      const j = this.nextBelow(i + 1);
      [items[i], items[j]] = [items[j], items[i]];
    }
    return items;
  }
}

export interface Split {
  train: number[];
  val: number[];
  test: number[];
}

/** An independently randomized 10/10/80 split; each id list sorted. */
export function randomSplit(numNodes: number, seed: number): Split {
  const rng = new SplitMix32(seed);
  const perm = rng.shuffle(Array.from({ length: numNodes }, (_, i) => i));
  const nTrain = Math.round(0.10 * numNodes);
  const nVal = Math.round(0.10 * numNodes);
  const sortAsc = (xs: number[]) => xs.sort((a, b) => a - b);
  return {
    train: sortAsc(perm.slice(0, nTrain)),
    val: sortAsc(perm.slice(nTrain, nTrain + nVal)),
    test: sortAsc(perm.slice(nTrain + nVal)),
  };
}

export function tenSplits(numNodes: number, seedBase: number): Record<string, Split> {
  const out: Record<string, Split> = {};
  for (let k = 0; k < 10; k++) {
    out[`split_${k}`] = randomSplit(numNodes, seedBase + k);
  }
  return out;
}
