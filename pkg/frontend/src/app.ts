/**
 * DOM wiring for the review board.
 *
 * Everything rendered here is fetched from the service on demand; the
 * browser holds no derived state beyond the open review session. The
 * only write the page ever issues is POST /api/review.
 */

import { ApiClient, ClusterView, EXPORT_URL, Stats, Verdict } from './api.js';
import { KEY_VERDICTS, ReviewSession, clusterPairs, progressPercent } from './review.js';

const client = new ApiClient();

let threshold = 0.1;
let session: ReviewSession | null = null;
let activeCluster: ClusterView | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

// ================= data loading =================

async function refresh(): Promise<void> {
  try {
    const [stats, page] = await Promise.all([
      client.getStats(threshold),
      client.getClusters(threshold),
    ]);
    renderStats(stats);
    renderBoard(page.clusters);
  } catch (err) {
    toast(`load failed: ${err instanceof Error ? err.message : String(err)}`);
  }
}

async function initialLoad(): Promise<void> {
  try {
    // No threshold parameter: the server answers with its default, and
    // the slider adopts it so the page starts where the service does.
    const stats = await client.getStats();
    threshold = stats.threshold;
    const slider = el<HTMLInputElement>('threshold-slider');
    slider.value = String(threshold);
    el<HTMLSpanElement>('threshold-value').textContent = threshold.toFixed(3);
    renderStats(stats);
    const page = await client.getClusters(threshold);
    renderBoard(page.clusters);
  } catch (err) {
    toast(`load failed: ${err instanceof Error ? err.message : String(err)}`);
  }
}

// ================= board =================

function renderStats(stats: Stats): void {
  el('stat-corpus').textContent = String(stats.corpus_size);
  el('stat-kind').textContent = stats.descriptor_kind;
  el('stat-clusters').textContent = String(stats.cluster_count);
  el('stat-reviewed').textContent = `${stats.reviewed_pairs} / ${stats.reviewable_pairs}`;
  const percent = progressPercent(stats.reviewed_pairs, stats.reviewable_pairs);
  el('stat-progress').textContent = `${percent}%`;
  el<HTMLDivElement>('progress-fill').style.width = `${percent}%`;
}

function renderBoard(clusters: ClusterView[]): void {
  const board = el<HTMLDivElement>('board');
  board.textContent = '';
  const empty = el<HTMLDivElement>('empty-state');
  if (clusters.length === 0) {
    empty.hidden = false;
    return;
  }
  empty.hidden = true;
  for (const cluster of clusters) {
    board.appendChild(clusterCard(cluster));
  }
}

function clusterCard(cluster: ClusterView): HTMLElement {
  const card = document.createElement('button');
  card.className = 'cluster-card';
  card.type = 'button';

  const strip = document.createElement('div');
  strip.className = 'thumb-strip';
  for (const member of cluster.members.slice(0, 4)) {
    const img = document.createElement('img');
    img.src = member.thumb_url;
    img.alt = member.image_id;
    img.loading = 'lazy';
    strip.appendChild(img);
  }
  card.appendChild(strip);

  const label = document.createElement('div');
  label.className = 'cluster-label';
  label.textContent = `${cluster.size} images · ${cluster.medoid}`;
  card.appendChild(label);

  card.addEventListener('click', () => openReview(cluster));
  return card;
}

// ================= pair review =================

function openReview(cluster: ClusterView): void {
  activeCluster = cluster;
  session = new ReviewSession(clusterPairs(cluster), client);
  el<HTMLDivElement>('review-overlay').hidden = false;
  renderPair();
}

function closeReview(): void {
  el<HTMLDivElement>('review-overlay').hidden = true;
  activeCluster = null;
  void refresh();
}

function memberUrl(imageId: string): string {
  const member = activeCluster?.members.find((m) => m.image_id === imageId);
  return member ? member.file_url : '';
}

function renderPair(): void {
  if (session === null) return;
  if (session.done) {
    closeReview();
    return;
  }
  const pair = session.current;
  if (pair === null) return;
  el<HTMLImageElement>('pair-left').src = memberUrl(pair.a);
  el('pair-left-id').textContent = pair.a;
  el<HTMLImageElement>('pair-right').src = memberUrl(pair.b);
  el('pair-right-id').textContent = pair.b;
  el('pair-counter').textContent = `pair ${session.index + 1} of ${session.total}`;
}

async function applyVerdict(verdict: Verdict): Promise<void> {
  if (session === null || session.done) return;
  const ok = await session.decide(verdict);
  if (!ok) {
    toast('verdict not saved, queued for retry', true);
  }
  renderPair();
}

// ================= toast =================

let toastTimer: ReturnType<typeof setTimeout> | null = null;

function toast(message: string, withRetry = false): void {
  const box = el<HTMLDivElement>('toast');
  el('toast-message').textContent = message;
  el<HTMLButtonElement>('toast-retry').hidden = !withRetry;
  box.hidden = false;
  if (toastTimer !== null) clearTimeout(toastTimer);
  toastTimer = setTimeout(() => {
    box.hidden = true;
  }, 6000);
}

async function retryFailed(): Promise<void> {
  if (session === null) return;
  const flushed = await session.retryQueued();
  const left = session.retryQueue.length;
  if (left === 0) {
    toast(`retry ok, ${flushed} saved`);
    void refresh();
  } else {
    toast(`${left} still unsaved, will keep them queued`, true);
  }
}

// ================= wiring =================

function onKeydown(event: KeyboardEvent): void {
  if (el<HTMLDivElement>('review-overlay').hidden) return;
  if (event.key === 'Escape') {
    closeReview();
    return;
  }
  if (event.key === 's') {
    session?.skip();
    renderPair();
    return;
  }
  const verdict = KEY_VERDICTS[event.key];
  if (verdict !== undefined) void applyVerdict(verdict);
}

function init(): void {
  const slider = el<HTMLInputElement>('threshold-slider');
  slider.addEventListener('input', () => {
    el('threshold-value').textContent = Number(slider.value).toFixed(3);
  });
  slider.addEventListener('change', () => {
    threshold = Number(slider.value);
    void refresh();
  });

  el<HTMLAnchorElement>('export-link').href = EXPORT_URL;

  el('verdict-duplicate').addEventListener('click', () => void applyVerdict('duplicate'));
  el('verdict-distinct').addEventListener('click', () => void applyVerdict('distinct'));
  el('verdict-unsure').addEventListener('click', () => void applyVerdict('unsure'));
  el('pair-skip').addEventListener('click', () => {
    session?.skip();
    renderPair();
  });
  el('review-close').addEventListener('click', closeReview);
  el('toast-retry').addEventListener('click', () => void retryFailed());

  document.addEventListener('keydown', onKeydown);
  void initialLoad();
}

document.addEventListener('DOMContentLoaded', init);
