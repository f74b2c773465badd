"""Exact nearest-neighbor search, duplicate clustering, and ranking metrics.

An :class:`Index` holds one descriptor per image, all of the same kind.
The distance function follows the kind: normalized Hamming for hashes,
Euclidean for unit-norm embeddings, cosine distance for unnormalized
ones. The kind is part of the index metadata, so descriptors of mixed
provenance can never be compared. Search is a brute-force scan; corpora
here are small enough that exactness beats approximation.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import AbstractSet, Iterable, Mapping, Sequence

import numpy as np

from ndarchive.errors import (
    DegenerateEmbeddingError,
    IncomparableHashError,
    InvalidInputError,
    NotFoundError,
)
from ndarchive.hashing import HASH_BITS, PerceptualHash
from ndarchive.neuralcore.encoder import Embedding

INDEX_MAGIC = b"NDIX"
INDEX_VERSION = 1

# Descriptor kind tags, also used in the persisted header.
KIND_HASH = "hash"
KIND_UNIT = "embedding-unit"
KIND_RAW = "embedding-raw"
_KIND_TAGS = {KIND_HASH: 0, KIND_UNIT: 1, KIND_RAW: 2}
_TAG_KINDS = {tag: kind for kind, tag in _KIND_TAGS.items()}


@dataclass(frozen=True)
class IndexEntry:
    """One indexed image: id, descriptor, and optional ground-truth group."""

    image_id: str
    descriptor: PerceptualHash | Embedding
    group_id: int | None = None

    def __post_init__(self):
        if not self.image_id:
            raise InvalidInputError("image_id must be non-empty")
        if not isinstance(self.descriptor, (PerceptualHash, Embedding)):
            raise InvalidInputError("descriptor must be a hash or an embedding")


@dataclass(frozen=True)
class RetrievalResult:
    """Ranked neighbors of one query, ascending distance, ids break ties."""

    query_id: str
    ranked: tuple[tuple[str, float], ...]

    def __post_init__(self):
        ranked = tuple((str(i), float(d)) for i, d in self.ranked)
        for (id_a, d_a), (id_b, d_b) in zip(ranked, ranked[1:]):
            if d_b < d_a or (d_b == d_a and id_b <= id_a):
                raise InvalidInputError("ranking must ascend by (distance, image_id)")
        object.__setattr__(self, "ranked", ranked)


@dataclass(frozen=True)
class DuplicateCluster:
    cluster_id: int
    member_ids: tuple[str, ...]
    threshold_used: float

    def __post_init__(self):
        if not self.member_ids:
            raise InvalidInputError("a cluster cannot be empty")
        object.__setattr__(self, "member_ids", tuple(self.member_ids))


def _descriptor_kind(descriptor: PerceptualHash | Embedding) -> str:
    if isinstance(descriptor, PerceptualHash):
        return KIND_HASH
    return KIND_UNIT if descriptor.normalized else KIND_RAW


class Index:
    """Immutable collection of same-kind descriptors, queryable by id."""

    def __init__(self, entries: Iterable[IndexEntry]):
        self.entries: tuple[IndexEntry, ...] = tuple(entries)
        seen: set[str] = set()
        for entry in self.entries:
            if entry.image_id in seen:
                raise InvalidInputError(f"duplicate image_id {entry.image_id!r}")
            seen.add(entry.image_id)

        self.kind: str | None = None
        self.algorithm: str | None = None
        self.dim: int | None = None
        if self.entries:
            first = self.entries[0].descriptor
            self.kind = _descriptor_kind(first)
            if self.kind == KIND_HASH:
                self.algorithm = first.algorithm
            else:
                self.dim = first.dim
            for entry in self.entries:
                self._check_compatible(entry.descriptor)

        self._pos = {e.image_id: i for i, e in enumerate(self.entries)}
        if self.kind == KIND_HASH:
            self._bits = np.stack([e.descriptor.bits for e in self.entries])
        elif self.kind is not None:
            self._vecs = np.stack([e.descriptor.values for e in self.entries])

    def _check_compatible(self, descriptor: PerceptualHash | Embedding) -> None:
        kind = _descriptor_kind(descriptor)
        if kind != self.kind:
            raise InvalidInputError(f"index holds {self.kind} descriptors, got {kind}")
        if kind == KIND_HASH and descriptor.algorithm != self.algorithm:
            raise IncomparableHashError(
                f"index hashes are {self.algorithm}, got {descriptor.algorithm}"
            )
        if kind != KIND_HASH and descriptor.dim != self.dim:
            raise InvalidInputError(
                f"index embeddings have dimension {self.dim}, got {descriptor.dim}"
            )

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(e.image_id for e in self.entries)

    def entry(self, image_id: str) -> IndexEntry:
        if image_id not in self._pos:
            raise NotFoundError(image_id)
        return self.entries[self._pos[image_id]]

    def distances_from(self, image_id: str) -> np.ndarray:
        """Distance from one indexed image to every entry, in entry order."""
        pos = self._pos.get(image_id)
        if pos is None:
            raise NotFoundError(image_id)
        if self.kind == KIND_HASH:
            raw = np.count_nonzero(self._bits != self._bits[pos], axis=1)
            return raw / float(self._bits.shape[1])
        if self.kind == KIND_UNIT:
            return np.linalg.norm(self._vecs - self._vecs[pos], axis=1)
        norms = np.linalg.norm(self._vecs, axis=1)
        if norms[pos] == 0.0 or np.any(norms == 0.0):
            raise DegenerateEmbeddingError("zero vector has no cosine distance")
        cos = (self._vecs @ self._vecs[pos]) / (norms * norms[pos])
        return 1.0 - cos


def query(index: Index, query_id: str, k: int) -> RetrievalResult:
    """Top-k neighbors of an indexed image, the query itself included.

    The scan is exhaustive; ranking ascends by distance with ties broken
    by ascending image_id, so reruns are identical. The query sits at
    rank 1 with distance 0. If k exceeds the index size the whole index
    is returned.
    """
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    distances = index.distances_from(query_id)
    ids = index.ids
    order = sorted(range(len(ids)), key=lambda i: (distances[i], ids[i]))
    top = order[: min(k, len(order))]
    return RetrievalResult(query_id, tuple((ids[i], float(distances[i])) for i in top))


def precision_at_k(result: RetrievalResult, relevant: AbstractSet[str], k: int) -> float:
    """Fraction of the top-k ranked ids that are relevant."""
    if k < 1 or k > len(result.ranked):
        raise InvalidInputError(
            f"k must lie in [1, {len(result.ranked)}] for this result, got {k}"
        )
    hits = sum(1 for image_id, _ in result.ranked[:k] if image_id in relevant)
    return hits / k


def average_precision_at_k(
    result: RetrievalResult, relevant: AbstractSet[str], k: int
) -> float:
    """AP@k = (1/min(R,k)) * sum over hit ranks of precision at that rank."""
    if not relevant:
        raise InvalidInputError(f"query {result.query_id!r} has an empty relevant set")
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    total = 0.0
    hits = 0
    for rank, (image_id, _) in enumerate(result.ranked[:k], start=1):
        if image_id in relevant:
            hits += 1
            total += hits / rank
    return total / min(len(relevant), k)


def map_at_k(
    results: Sequence[RetrievalResult],
    relevance: Mapping[str, AbstractSet[str]],
    k: int,
) -> float:
    """Mean of per-query AP@k; every query needs a non-empty relevant set."""
    if not results:
        raise InvalidInputError("map_at_k needs at least one query result")
    total = 0.0
    for result in results:
        if result.query_id not in relevance:
            raise InvalidInputError(f"no relevance set for query {result.query_id!r}")
        total += average_precision_at_k(result, relevance[result.query_id], k)
    return total / len(results)


def relevant_sets(index: Index, include_self: bool = True) -> dict[str, set[str]]:
    """Ground-truth relevant ids per query, from the entries' group ids.

    With ``include_self`` (the default) each query counts as its own
    relevant item, so a group of four yields R = 4. Entries without a
    group id get an empty set unless ``include_self`` keeps just them.
    """
    by_group: dict[int, list[str]] = {}
    for entry in index.entries:
        if entry.group_id is not None:
            by_group.setdefault(entry.group_id, []).append(entry.image_id)
    out: dict[str, set[str]] = {}
    for entry in index.entries:
        members = set(by_group.get(entry.group_id, [])) if entry.group_id is not None else set()
        if include_self:
            members.add(entry.image_id)
        else:
            members.discard(entry.image_id)
        out[entry.image_id] = members
    return out


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:  # path compression
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def cluster(index: Index, threshold: float) -> list[DuplicateCluster]:
    """Connected components of the graph with edges at distance <= threshold.

    Closeness is transitive here: A near B and B near C land all three in
    one cluster even when A and C are far apart. Clusters are numbered by
    their smallest member id; singletons are ordinary clusters.
    """
    if threshold < 0:
        raise InvalidInputError("threshold must be >= 0")
    n = len(index)
    uf = _UnionFind(n)
    ids = index.ids
    for i in range(n):
        distances = index.distances_from(ids[i])
        for j in range(i + 1, n):
            if distances[j] <= threshold:
                uf.union(i, j)
    groups: dict[int, list[str]] = {}
    for i in range(n):
        groups.setdefault(uf.find(i), []).append(ids[i])
    ordered = sorted((sorted(members) for members in groups.values()), key=lambda m: m[0])
    return [
        DuplicateCluster(number, tuple(members), float(threshold))
        for number, members in enumerate(ordered)
    ]


def medoid(index: Index, member_ids: Sequence[str]) -> str:
    """The member minimizing total distance to the others; ids break ties."""
    if not member_ids:
        raise InvalidInputError("medoid of an empty member list")
    members = sorted(member_ids)
    positions = {m: i for i, m in enumerate(members)}
    totals = np.zeros(len(members))
    for m in members:
        distances = index.distances_from(m)
        row = [distances[index._pos[other]] for other in members]
        totals[positions[m]] = sum(row)
    best = min(range(len(members)), key=lambda i: (totals[i], members[i]))
    return members[best]


def save_index(path, index: Index) -> None:
    """Persist an index as a binary record stream (magic NDIX)."""
    with open(path, "wb") as fh:
        fh.write(INDEX_MAGIC)
        kind = index.kind if index.kind is not None else KIND_HASH
        fh.write(struct.pack("<HB", INDEX_VERSION, _KIND_TAGS[kind]))
        if kind == KIND_HASH:
            algo = (index.algorithm or "").encode("utf-8")
            bit_length = HASH_BITS.get(index.algorithm, 0) if index.algorithm else 0
            fh.write(struct.pack("<H", len(algo)))
            fh.write(algo)
            fh.write(struct.pack("<I", bit_length))
        else:
            fh.write(struct.pack("<I", index.dim or 0))
        fh.write(struct.pack("<I", len(index)))
        for entry in index.entries:
            ident = entry.image_id.encode("utf-8")
            fh.write(struct.pack("<H", len(ident)))
            fh.write(ident)
            if kind == KIND_HASH:
                fh.write(np.packbits(entry.descriptor.bits).tobytes())
            else:
                fh.write(entry.descriptor.values.astype("<f8").tobytes())
            if entry.group_id is None:
                fh.write(struct.pack("<B", 0))
            else:
                fh.write(struct.pack("<Bq", 1, entry.group_id))


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise InvalidInputError("index file truncated")
    return data


def load_index(path) -> Index:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != INDEX_MAGIC:
            raise InvalidInputError("not an index file (bad magic)")
        version, tag = struct.unpack("<HB", _read_exact(fh, 3))
        if version != INDEX_VERSION:
            raise InvalidInputError(f"unsupported index version {version}")
        if tag not in _TAG_KINDS:
            raise InvalidInputError(f"unknown descriptor kind tag {tag}")
        kind = _TAG_KINDS[tag]
        if kind == KIND_HASH:
            (algo_len,) = struct.unpack("<H", _read_exact(fh, 2))
            algorithm = _read_exact(fh, algo_len).decode("utf-8")
            (bit_length,) = struct.unpack("<I", _read_exact(fh, 4))
        else:
            (dim,) = struct.unpack("<I", _read_exact(fh, 4))
        (count,) = struct.unpack("<I", _read_exact(fh, 4))

        entries = []
        for _ in range(count):
            (id_len,) = struct.unpack("<H", _read_exact(fh, 2))
            image_id = _read_exact(fh, id_len).decode("utf-8")
            if kind == KIND_HASH:
                packed = np.frombuffer(_read_exact(fh, bit_length // 8), dtype=np.uint8)
                bits = np.unpackbits(packed)[:bit_length]
                descriptor: PerceptualHash | Embedding = PerceptualHash(algorithm, bits)
            else:
                raw = np.frombuffer(_read_exact(fh, 8 * dim), dtype="<f8")
                descriptor = Embedding(raw.astype(np.float64), normalized=(kind == KIND_UNIT))
            (has_group,) = struct.unpack("<B", _read_exact(fh, 1))
            group_id = None
            if has_group:
                (group_id,) = struct.unpack("<q", _read_exact(fh, 8))
            entries.append(IndexEntry(image_id, descriptor, group_id))
    return Index(entries)
