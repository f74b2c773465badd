/**
 * Review-session tests: pair enumeration, optimistic verdicts with
 * rollback, the retry queue, and a simulated post-then-export round
 * trip against an in-memory stand-in for the review log.
 */

import { describe, expect, it } from 'vitest';
import { ClusterView, ReviewDecision, Verdict } from '../src/api.js';
import {
  KEY_VERDICTS,
  ReviewPoster,
  ReviewSession,
  clusterPairs,
  pairKey,
  progressPercent,
} from '../src/review.js';

function member(id: string, distance: number) {
  return {
    image_id: id,
    distance_to_medoid: distance,
    thumb_url: `/api/images/${encodeURIComponent(id)}/thumb`,
    file_url: `/api/images/${encodeURIComponent(id)}/file`,
  };
}

function clusterOf(ids: string[]): ClusterView {
  return {
    cluster_id: 0,
    medoid: ids[0],
    member_ids: ids,
    members: ids.map((id, i) => member(id, i * 0.01)),
    size: ids.length,
  };
}

/** Poster whose failure pattern is scripted per call. */
function scriptedPoster(failures: boolean[]): ReviewPoster & { posted: ReviewDecision[] } {
  let call = 0;
  const posted: ReviewDecision[] = [];
  return {
    posted,
    async postReview(decision: ReviewDecision): Promise<ReviewDecision> {
      const fail = failures[call] ?? false;
      call++;
      if (fail) throw new Error('server unavailable');
      posted.push(decision);
      return decision;
    },
  };
}

describe('clusterPairs', () => {
  it('enumerates every unordered pair in served member order', () => {
    const pairs = clusterPairs(clusterOf(['c', 'a', 'b']));
    expect(pairs).toEqual([
      { a: 'a', b: 'c' },
      { a: 'b', b: 'c' },
      { a: 'a', b: 'b' },
    ]);
  });

  it('yields n*(n-1)/2 pairs', () => {
    expect(clusterPairs(clusterOf(['a', 'b', 'c', 'd', 'e'])).length).toBe(10);
    expect(clusterPairs(clusterOf(['solo'])).length).toBe(0);
  });
});

describe('pairKey and shortcuts', () => {
  it('is symmetric in its arguments', () => {
    expect(pairKey('b', 'a')).toBe(pairKey('a', 'b'));
  });

  it('maps d/x/u to the three verdicts', () => {
    expect(KEY_VERDICTS['d']).toBe('duplicate');
    expect(KEY_VERDICTS['x']).toBe('distinct');
    expect(KEY_VERDICTS['u']).toBe('unsure');
    expect(KEY_VERDICTS['q']).toBeUndefined();
  });
});

describe('progressPercent', () => {
  it('handles the empty corpus without dividing by zero', () => {
    expect(progressPercent(0, 0)).toBe(0);
  });

  it('rounds to whole percent', () => {
    expect(progressPercent(3, 12)).toBe(25);
    expect(progressPercent(1, 3)).toBe(33);
  });
});

describe('ReviewSession', () => {
  it('walks each pair once and records verdicts on success', async () => {
    const poster = scriptedPoster([]);
    const session = new ReviewSession(clusterPairs(clusterOf(['a', 'b', 'c'])), poster);
    expect(session.total).toBe(3);

    expect(await session.decide('duplicate')).toBe(true);
    expect(await session.decide('distinct')).toBe(true);
    expect(await session.decide('unsure')).toBe(true);

    expect(session.done).toBe(true);
    expect(session.current).toBeNull();
    expect(session.decided.get(pairKey('a', 'b'))).toBe('duplicate');
    expect(session.decided.get(pairKey('a', 'c'))).toBe('distinct');
    expect(session.decided.get(pairKey('b', 'c'))).toBe('unsure');
    expect(session.retryQueue.length).toBe(0);
    expect(poster.posted.length).toBe(3);
  });

  it('posts pairs in canonical order with the session reviewer', async () => {
    const poster = scriptedPoster([]);
    const session = new ReviewSession(clusterPairs(clusterOf(['z', 'a'])), poster, 'alice');
    await session.decide('duplicate');
    expect(poster.posted[0].image_a).toBe('a');
    expect(poster.posted[0].image_b).toBe('z');
    expect(poster.posted[0].reviewer).toBe('alice');
    expect(Number.isInteger(poster.posted[0].timestamp)).toBe(true);
  });

  it('rolls back the optimistic mark and queues the decision on failure', async () => {
    const poster = scriptedPoster([true]);
    const session = new ReviewSession(clusterPairs(clusterOf(['a', 'b'])), poster);

    const ok = await session.decide('duplicate');
    expect(ok).toBe(false);
    expect(session.decided.has(pairKey('a', 'b'))).toBe(false);
    expect(session.retryQueue.length).toBe(1);
    expect(session.retryQueue[0].verdict).toBe('duplicate');
    // The walk still advances; the queued POST carries the verdict.
    expect(session.done).toBe(true);
  });

  it('restores the prior verdict when a re-decision fails', async () => {
    const pair = { a: 'a', b: 'b' };
    const poster = scriptedPoster([false, true]);
    const session = new ReviewSession([pair, pair], poster);

    await session.decide('duplicate');
    const ok = await session.decide('distinct');
    expect(ok).toBe(false);
    expect(session.decided.get(pairKey('a', 'b'))).toBe('duplicate');
  });

  it('flushes the retry queue once the server recovers', async () => {
    const poster = scriptedPoster([true, true, false, false]);
    const session = new ReviewSession(clusterPairs(clusterOf(['a', 'b', 'c'])), poster);

    await session.decide('duplicate');
    await session.decide('distinct');
    expect(session.retryQueue.length).toBe(2);

    const flushed = await session.retryQueued();
    expect(flushed).toBe(2);
    expect(session.retryQueue.length).toBe(0);
    expect(session.decided.get(pairKey('a', 'b'))).toBe('duplicate');
    expect(session.decided.get(pairKey('a', 'c'))).toBe('distinct');
  });

  it('keeps decisions queued when the retry fails again', async () => {
    const poster = scriptedPoster([true, true, false]);
    const session = new ReviewSession(clusterPairs(clusterOf(['a', 'b'])), poster);
    await session.decide('unsure');

    expect(await session.retryQueued()).toBe(0);
    expect(session.retryQueue.length).toBe(1);

    expect(await session.retryQueued()).toBe(1);
    expect(session.retryQueue.length).toBe(0);
  });

  it('skip advances without posting', async () => {
    const poster = scriptedPoster([]);
    const session = new ReviewSession(clusterPairs(clusterOf(['a', 'b'])), poster);
    session.skip();
    expect(session.done).toBe(true);
    expect(poster.posted.length).toBe(0);
    expect(await session.decide('duplicate')).toBe(true);
    expect(poster.posted.length).toBe(0);
  });
});

describe('post then export round trip', () => {
  /** Latest-wins log with the same CSV shape the service exports. */
  class FakeLog implements ReviewPoster {
    private rows = new Map<string, ReviewDecision>();

    async postReview(decision: ReviewDecision): Promise<ReviewDecision> {
      this.rows.set(`${decision.image_a},${decision.image_b}`, decision);
      return decision;
    }

    exportCsv(): string {
      const lines = ['image_a,image_b,verdict,reviewer,timestamp'];
      const keys = [...this.rows.keys()].sort();
      for (const key of keys) {
        const d = this.rows.get(key) as ReviewDecision;
        lines.push(`${d.image_a},${d.image_b},${d.verdict},${d.reviewer},${d.timestamp}`);
      }
      return lines.join('\n') + '\n';
    }
  }

  it('every verdict posted by a session appears once in the export', async () => {
    const log = new FakeLog();
    const cluster = clusterOf(['g0/b.png', 'g0/a.png', 'g0/c.png']);
    const session = new ReviewSession(clusterPairs(cluster), log, 'reviewer1');

    const verdicts: Verdict[] = ['duplicate', 'duplicate', 'distinct'];
    for (const v of verdicts) {
      expect(await session.decide(v)).toBe(true);
    }

    const csv = log.exportCsv();
    const lines = csv.trim().split('\n');
    expect(lines[0]).toBe('image_a,image_b,verdict,reviewer,timestamp');
    expect(lines.length).toBe(4);
    expect(csv).toContain('g0/a.png,g0/b.png,duplicate,reviewer1');
    expect(csv).toContain('g0/b.png,g0/c.png,duplicate,reviewer1');
    expect(csv).toContain('g0/a.png,g0/c.png,distinct,reviewer1');
  });

  it('a re-posted pair keeps only the latest verdict', async () => {
    const log = new FakeLog();
    const pair = { a: 'a.png', b: 'b.png' };
    const session = new ReviewSession([pair, pair], log, 'reviewer1');
    await session.decide('unsure');
    await session.decide('duplicate');

    const csv = log.exportCsv();
    expect(csv).toContain('a.png,b.png,duplicate');
    expect(csv).not.toContain('unsure');
  });
});
