"""HTTP facade over an indexed collection.

Read endpoints expose neighbor rankings and threshold clustering
straight from the retrieval module; the only write path is the review
endpoint, which appends archivist decisions to a line-delimited log.
The log is replayed on boot with the newest decision per pair winning,
so restarts lose nothing.
"""

from __future__ import annotations

import io
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image

from ndarchive.errors import InvalidInputError
from ndarchive.manifest import CorpusManifest
from ndarchive.retrieval import Index, cluster, medoid, query

VERDICTS = ("duplicate", "distinct", "unsure")
DEFAULT_BIND = "127.0.0.1:8000"
THUMB_SIZE = 256

_MEDIA_TYPES = {".png": "image/png", ".jpg": "image/jpeg", ".jpeg": "image/jpeg"}


@dataclass(frozen=True)
class ReviewDecision:
    """One archivist verdict on a canonically ordered image pair."""

    image_a: str
    image_b: str
    verdict: str
    reviewer: str
    timestamp: int

    def __post_init__(self):
        if not self.image_a or not self.image_b or self.image_a == self.image_b:
            raise InvalidInputError("a review pair needs two distinct image ids")
        if self.image_a > self.image_b:
            raise InvalidInputError("review pair must be ordered image_a < image_b")
        if self.verdict not in VERDICTS:
            raise InvalidInputError(f"verdict must be one of {VERDICTS}")

    @classmethod
    def make(
        cls, first: str, second: str, verdict: str, reviewer: str, timestamp: int
    ) -> "ReviewDecision":
        a, b = sorted((first, second))
        return cls(a, b, verdict, reviewer, timestamp)

    @property
    def pair(self) -> tuple[str, str]:
        return (self.image_a, self.image_b)


def _decision_line(d: ReviewDecision) -> str:
    return f"{d.image_a},{d.image_b},{d.verdict},{d.reviewer},{d.timestamp}"


def _parse_decision_line(line: str) -> ReviewDecision:
    parts = line.split(",")
    if len(parts) != 5:
        raise InvalidInputError(f"malformed review log line: {line!r}")
    a, b, verdict, reviewer, ts = parts
    return ReviewDecision(a, b, verdict, reviewer, int(ts))


class ReviewLog:
    """Append-only decision log; the newest decision per pair wins."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self.latest: dict[tuple[str, str], ReviewDecision] = {}
        if self.path.is_file():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    decision = _parse_decision_line(line)
                    self.latest[decision.pair] = decision

    def record(self, decision: ReviewDecision) -> None:
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(_decision_line(decision) + "\n")
            self.latest[decision.pair] = decision

    def export_csv(self) -> str:
        rows = [_decision_line(self.latest[pair]) for pair in sorted(self.latest)]
        return "image_a,image_b,verdict,reviewer,timestamp\n" + "".join(
            row + "\n" for row in rows
        )


def _make_thumbnail(file_path: Path) -> bytes:
    with Image.open(file_path) as img:
        img = img.convert("RGB")
        img.thumbnail((THUMB_SIZE, THUMB_SIZE))
        buf = io.BytesIO()
        img.save(buf, format="JPEG", quality=85)
        return buf.getvalue()


def create_app(
    index: Index,
    manifest: CorpusManifest,
    root_dir: str | Path,
    review_log_path: str | Path,
    default_threshold: float = 0.1,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    """Wire the endpoints over a fixed index and manifest.

    ``root_dir`` anchors the manifest's relative paths; ``ui_dir``, when
    given, is served as static files at the site root.
    """
    root = Path(root_dir)
    records = {r.image_id: r for r in manifest.records}
    positions = {image_id: i for i, image_id in enumerate(index.ids)}
    log = ReviewLog(review_log_path)
    thumbs: dict[str, bytes] = {}
    app = FastAPI()
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def _not_found(what: str) -> JSONResponse:
        return JSONResponse({"error": what}, status_code=404)

    def _bad_request(what: str) -> JSONResponse:
        return JSONResponse({"error": what}, status_code=400)

    def _cluster_payload(threshold: float, singletons: bool) -> list[dict]:
        clusters = cluster(index, threshold)
        out = []
        for c in clusters:
            if len(c.member_ids) < 2 and not singletons:
                continue
            center = medoid(index, c.member_ids)
            distances = index.distances_from(center)
            members = sorted(
                (
                    {
                        "image_id": m,
                        "distance_to_medoid": float(distances[positions[m]]),
                        "thumb_url": f"/api/images/{m}/thumb",
                        "file_url": f"/api/images/{m}/file",
                    }
                    for m in c.member_ids
                ),
                key=lambda row: (row["distance_to_medoid"], row["image_id"]),
            )
            out.append(
                {
                    "cluster_id": c.cluster_id,
                    "medoid": center,
                    "member_ids": list(c.member_ids),
                    "members": members,
                    "size": len(c.member_ids),
                }
            )
        return out

    def _progress(threshold: float) -> tuple[int, int, int]:
        """(cluster count, decided intra-cluster pairs, total intra-cluster pairs)."""
        clusters = [c for c in cluster(index, threshold) if len(c.member_ids) >= 2]
        total = 0
        decided = 0
        for c in clusters:
            members = sorted(c.member_ids)
            for i in range(len(members)):
                for j in range(i + 1, len(members)):
                    total += 1
                    if (members[i], members[j]) in log.latest:
                        decided += 1
        return len(clusters), decided, total

    @app.get("/api/images/{image_id:path}/neighbors")
    def neighbors(image_id: str, k: int = 10):
        if image_id not in records:
            return _not_found(f"unknown image {image_id}")
        if k < 1:
            return _bad_request("k must be >= 1")
        result = query(index, image_id, k)
        return {
            "query_id": result.query_id,
            "neighbors": [
                {"image_id": i, "distance": d} for i, d in result.ranked
            ],
        }

    @app.get("/api/clusters")
    def clusters(threshold: float | None = None, singletons: bool = False):
        t = default_threshold if threshold is None else threshold
        if t < 0:
            return _bad_request("threshold must be >= 0")
        return {"threshold": t, "clusters": _cluster_payload(t, singletons)}

    @app.get("/api/images/{image_id:path}/thumb")
    def thumb(image_id: str):
        record = records.get(image_id)
        if record is None:
            return _not_found(f"unknown image {image_id}")
        if image_id not in thumbs:
            file_path = root / record.path
            if not file_path.is_file():
                return _not_found(f"missing file for {image_id}")
            thumbs[image_id] = _make_thumbnail(file_path)
        return Response(content=thumbs[image_id], media_type="image/jpeg")

    @app.get("/api/images/{image_id:path}/file")
    def original(image_id: str):
        record = records.get(image_id)
        if record is None:
            return _not_found(f"unknown image {image_id}")
        file_path = root / record.path
        if not file_path.is_file():
            return _not_found(f"missing file for {image_id}")
        media = _MEDIA_TYPES.get(file_path.suffix.lower(), "application/octet-stream")
        return Response(content=file_path.read_bytes(), media_type=media)

    @app.post("/api/review")
    async def review(request: Request):
        try:
            payload = await request.json()
        except Exception:
            return _bad_request("body must be JSON")
        if not isinstance(payload, dict):
            return _bad_request("body must be a JSON object")
        image_a = payload.get("image_a")
        image_b = payload.get("image_b")
        verdict = payload.get("verdict")
        reviewer = payload.get("reviewer", "")
        if not isinstance(image_a, str) or not isinstance(image_b, str):
            return _bad_request("image_a and image_b must be image id strings")
        if image_a not in records or image_b not in records:
            return _not_found("both review ids must be in the collection")
        timestamp = payload.get("timestamp", int(time.time()))
        if not isinstance(timestamp, int):
            return _bad_request("timestamp must be an integer (UTC seconds)")
        try:
            decision = ReviewDecision.make(
                image_a, image_b, str(verdict), str(reviewer), timestamp
            )
        except InvalidInputError as exc:
            return _bad_request(str(exc))
        log.record(decision)
        return JSONResponse(
            {
                "image_a": decision.image_a,
                "image_b": decision.image_b,
                "verdict": decision.verdict,
                "reviewer": decision.reviewer,
                "timestamp": decision.timestamp,
            },
            status_code=201,
        )

    @app.get("/api/review/export")
    def export():
        return Response(content=log.export_csv(), media_type="text/csv")

    @app.get("/api/stats")
    def stats(threshold: float | None = None):
        t = default_threshold if threshold is None else threshold
        if t < 0:
            return _bad_request("threshold must be >= 0")
        n_clusters, decided, total = _progress(t)
        return {
            "corpus_size": len(manifest),
            "descriptor_kind": index.kind,
            "threshold": t,
            "cluster_count": n_clusters,
            "reviewed_pairs": decided,
            "reviewable_pairs": total,
            "review_progress": (decided / total) if total else 0.0,
        }

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def parse_bind(bind: str) -> tuple[str, int]:
    host, sep, port = bind.rpartition(":")
    if not sep or not host or not port.isdigit():
        raise InvalidInputError(f"bind address must be host:port, got {bind!r}")
    return host, int(port)


def serve(
    index: Index,
    manifest: CorpusManifest,
    root_dir: str | Path,
    review_log_path: str | Path,
    bind: str = DEFAULT_BIND,
    default_threshold: float = 0.1,
    ui_dir: str | Path | None = None,
) -> None:
    """Run the service until interrupted. Bind failures exit with code 2."""
    import uvicorn

    host, port = parse_bind(bind)
    app = create_app(index, manifest, root_dir, review_log_path, default_threshold, ui_dir)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except OSError as exc:
        raise SystemExit(2) from exc
