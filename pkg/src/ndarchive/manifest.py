"""Corpus manifest records and their tab-separated on-disk format.

One record per line: ``image_id<TAB>path<TAB>group_id<TAB>split`` with
``-`` standing in for an unknown group. Paths are interpreted relative
to the manifest file's directory.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from ndarchive.errors import ManifestError

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class ManifestRecord:
    image_id: str
    path: str
    group_id: int | None
    split: str

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ManifestError(f"unknown split {self.split!r} for {self.image_id!r}")
        if not self.image_id:
            raise ManifestError("image_id must be non-empty")


@dataclass
class CorpusManifest:
    """Ordered image records with group labels (when known) and splits."""

    records: list[ManifestRecord]

    def __post_init__(self):
        seen: set[str] = set()
        for rec in self.records:
            if rec.image_id in seen:
                raise ManifestError(f"duplicate image_id {rec.image_id!r}")
            seen.add(rec.image_id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def ids(self) -> list[str]:
        return [r.image_id for r in self.records]

    def for_split(self, *splits: str) -> list[ManifestRecord]:
        wanted = set(splits)
        return [r for r in self.records if r.split in wanted]

    def record_for(self, image_id: str) -> ManifestRecord:
        for r in self.records:
            if r.image_id == image_id:
                return r
        raise ManifestError(f"no record for image_id {image_id!r}")

    def group_members(self, group_id: int, splits: set[str] | None = None) -> list[str]:
        return [
            r.image_id
            for r in self.records
            if r.group_id == group_id and (splits is None or r.split in splits)
        ]


def save_manifest(manifest: CorpusManifest, path: str | Path) -> None:
    lines = []
    for r in manifest.records:
        group = "-" if r.group_id is None else str(r.group_id)
        lines.append(f"{r.image_id}\t{r.path}\t{group}\t{r.split}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(path: str | Path, check_files: bool = True) -> CorpusManifest:
    """Parse a manifest file; verifies referenced files exist by default."""
    path = Path(path)
    base = path.parent
    records = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ManifestError(f"{path}:{lineno}: expected 4 tab-separated fields")
        image_id, rel, group_s, split = parts
        if group_s == "-":
            group = None
        else:
            try:
                group = int(group_s)
            except ValueError:
                raise ManifestError(
                    f"{path}:{lineno}: group_id must be an integer or '-', got {group_s!r}"
                ) from None
        if check_files and not (base / rel).is_file():
            raise ManifestError(f"{path}:{lineno}: missing file {base / rel}")
        records.append(ManifestRecord(image_id, rel, group, split))
    return CorpusManifest(records)
