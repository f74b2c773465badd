/**
 * Typed client for the ndarchive review service.
 *
 * Every read goes through GET; the single write path is POST /api/review.
 * The server stores review pairs in canonical (sorted) order, so the
 * client sorts before posting to keep optimistic state and server state
 * keyed identically.
 */

export type Verdict = 'duplicate' | 'distinct' | 'unsure';

export interface ClusterMember {
  image_id: string;
  distance_to_medoid: number;
  thumb_url: string;
  file_url: string;
}

export interface ClusterView {
  cluster_id: number;
  medoid: string;
  member_ids: string[];
  members: ClusterMember[];
  size: number;
}

export interface ClusterPage {
  threshold: number;
  clusters: ClusterView[];
}

export interface Stats {
  corpus_size: number;
  descriptor_kind: string;
  threshold: number;
  cluster_count: number;
  reviewed_pairs: number;
  reviewable_pairs: number;
  review_progress: number;
}

export interface Neighbor {
  image_id: string;
  distance: number;
}

export interface NeighborPage {
  query_id: string;
  neighbors: Neighbor[];
}

export interface ReviewDecision {
  image_a: string;
  image_b: string;
  verdict: Verdict;
  reviewer: string;
  timestamp: number;
}

export const EXPORT_URL = '/api/review/export';

export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, message: string) {
    super(message);
    this.status = status;
  }
}

/** Sorted pair: the server rejects image_a >= image_b. */
export function canonicalPair(a: string, b: string): [string, string] {
  return a < b ? [a, b] : [b, a];
}

export function makeDecision(
  a: string,
  b: string,
  verdict: Verdict,
  reviewer: string,
  timestamp?: number,
): ReviewDecision {
  const [first, second] = canonicalPair(a, b);
  return {
    image_a: first,
    image_b: second,
    verdict,
    reviewer,
    // Integer UTC seconds; the server rejects anything else.
    timestamp: timestamp ?? Math.floor(Date.now() / 1000),
  };
}

async function errorMessage(response: Response): Promise<string> {
  try {
    const body = await response.json();
    if (body && typeof body.error === 'string') return body.error;
  } catch {
    // Non-JSON error bodies fall through to the status line.
  }
  return `request failed with status ${response.status}`;
}

export class ApiClient {
  private readonly base: string;
  private readonly fetchFn: typeof fetch;

  constructor(base = '', fetchFn: typeof fetch = fetch) {
    this.base = base.replace(/\/$/, '');
    this.fetchFn = fetchFn;
  }

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchFn(this.base + path, { method: 'GET' });
    if (!response.ok) {
      throw new ApiError(response.status, await errorMessage(response));
    }
    return (await response.json()) as T;
  }

  getStats(threshold?: number): Promise<Stats> {
    const params = new URLSearchParams();
    if (threshold !== undefined) params.set('threshold', String(threshold));
    const qs = params.toString();
    return this.getJson<Stats>(`/api/stats${qs ? '?' + qs : ''}`);
  }

  getClusters(threshold?: number, singletons = false): Promise<ClusterPage> {
    const params = new URLSearchParams();
    if (threshold !== undefined) params.set('threshold', String(threshold));
    if (singletons) params.set('singletons', 'true');
    const qs = params.toString();
    return this.getJson<ClusterPage>(`/api/clusters${qs ? '?' + qs : ''}`);
  }

  getNeighbors(imageId: string, k: number): Promise<NeighborPage> {
    const encoded = encodeURIComponent(imageId);
    return this.getJson<NeighborPage>(`/api/images/${encoded}/neighbors?k=${k}`);
  }

  async postReview(decision: ReviewDecision): Promise<ReviewDecision> {
    const response = await this.fetchFn(this.base + '/api/review', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(decision),
    });
    if (response.status !== 201) {
      throw new ApiError(response.status, await errorMessage(response));
    }
    return (await response.json()) as ReviewDecision;
  }
}
