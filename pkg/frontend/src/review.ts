/**
 * Pair-sequential review flow, kept free of DOM so it is testable.
 *
 * A cluster becomes the list of its unordered member pairs, walked one
 * side-by-side comparison at a time. Verdicts apply optimistically and
 * roll back if the POST fails; failed decisions wait in a retry queue
 * instead of being dropped.
 */

import {
  ClusterView,
  ReviewDecision,
  Verdict,
  canonicalPair,
  makeDecision,
} from './api.js';

export interface PairRef {
  a: string;
  b: string;
}

/** The one write path a session needs; ApiClient satisfies it. */
export interface ReviewPoster {
  postReview(decision: ReviewDecision): Promise<ReviewDecision>;
}

export const KEY_VERDICTS: Record<string, Verdict> = {
  d: 'duplicate',
  x: 'distinct',
  u: 'unsure',
};

export function pairKey(a: string, b: string): string {
  const [first, second] = canonicalPair(a, b);
  return `${first}|${second}`;
}

/**
 * All unordered pairs of cluster members, in the served member order
 * (closest to the medoid first), each pair canonically sorted.
 */
export function clusterPairs(cluster: ClusterView): PairRef[] {
  const ids = cluster.members.map((m) => m.image_id);
  const pairs: PairRef[] = [];
  for (let i = 0; i < ids.length; i++) {
    for (let j = i + 1; j < ids.length; j++) {
      const [a, b] = canonicalPair(ids[i], ids[j]);
      pairs.push({ a, b });
    }
  }
  return pairs;
}

export function progressPercent(reviewed: number, reviewable: number): number {
  if (reviewable <= 0) return 0;
  return Math.round((reviewed / reviewable) * 100);
}

export class ReviewSession {
  private readonly pairs: PairRef[];
  private readonly client: ReviewPoster;
  private readonly reviewer: string;
  private position = 0;
  readonly decided = new Map<string, Verdict>();
  readonly retryQueue: ReviewDecision[] = [];

  constructor(pairs: PairRef[], client: ReviewPoster, reviewer = '') {
    this.pairs = pairs;
    this.client = client;
    this.reviewer = reviewer;
  }

  get current(): PairRef | null {
    return this.position < this.pairs.length ? this.pairs[this.position] : null;
  }

  get index(): number {
    return this.position;
  }

  get total(): number {
    return this.pairs.length;
  }

  get done(): boolean {
    return this.position >= this.pairs.length;
  }

  skip(): void {
    if (this.position < this.pairs.length) this.position++;
  }

  /**
   * Apply a verdict to the current pair: mark it, advance, POST. On a
   * failed POST the mark is rolled back and the decision queued for
   * retry; returns false so the caller can surface the error.
   */
  async decide(verdict: Verdict): Promise<boolean> {
    const pair = this.current;
    if (pair === null) return true;
    const key = pairKey(pair.a, pair.b);
    const previous = this.decided.get(key);
    const decision = makeDecision(pair.a, pair.b, verdict, this.reviewer);
    this.decided.set(key, verdict);
    this.position++;
    try {
      await this.client.postReview(decision);
      return true;
    } catch {
      if (previous === undefined) {
        this.decided.delete(key);
      } else {
        this.decided.set(key, previous);
      }
      this.retryQueue.push(decision);
      return false;
    }
  }

  /** Re-post queued decisions; ones that fail again stay queued. */
  async retryQueued(): Promise<number> {
    const waiting = this.retryQueue.splice(0, this.retryQueue.length);
    let flushed = 0;
    for (const decision of waiting) {
      try {
        await this.client.postReview(decision);
        this.decided.set(pairKey(decision.image_a, decision.image_b), decision.verdict);
        flushed++;
      } catch {
        this.retryQueue.push(decision);
      }
    }
    return flushed;
  }
}
