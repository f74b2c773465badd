"""Tab-separated corpus manifest persistence."""

import pytest

from ndarchive.errors import ManifestError
from ndarchive.manifest import CorpusManifest, ManifestRecord, load_manifest, save_manifest


def make_manifest(tmp_path, records):
    for r in records:
        target = tmp_path / r.path
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(b"stub")
    manifest = CorpusManifest(records=list(records))
    path = tmp_path / "manifest.tsv"
    save_manifest(manifest, path)
    return path


def test_roundtrip(tmp_path):
    records = [
        ManifestRecord("a/x.png", "a/x.png", 0, "train"),
        ManifestRecord("a/y.png", "a/y.png", 0, "train"),
        ManifestRecord("b/z.png", "b/z.png", None, "test"),
    ]
    path = make_manifest(tmp_path, records)
    loaded = load_manifest(path, check_files=False)
    assert loaded.records == records


def test_unknown_group_serialized_as_dash(tmp_path):
    path = make_manifest(tmp_path, [ManifestRecord("x.png", "x.png", None, "test")])
    line = path.read_text().strip().splitlines()[-1]
    assert line.split("\t")[2] == "-"


def test_fields_tab_separated(tmp_path):
    path = make_manifest(tmp_path, [ManifestRecord("x.png", "x.png", 7, "val")])
    line = path.read_text().strip().splitlines()[-1]
    assert line.split("\t") == ["x.png", "x.png", "7", "val"]


def test_missing_file_error_names_path(tmp_path):
    manifest_path = tmp_path / "manifest.tsv"
    manifest_path.write_text("x.png\timages/x.png\t0\ttrain\n")
    with pytest.raises(ManifestError, match="images/x.png"):
        load_manifest(manifest_path, check_files=True)


def test_check_files_false_skips_existence(tmp_path):
    manifest_path = tmp_path / "manifest.tsv"
    manifest_path.write_text("x.png\timages/x.png\t0\ttrain\n")
    loaded = load_manifest(manifest_path, check_files=False)
    assert loaded.records[0].group_id == 0


def test_duplicate_ids_rejected():
    records = [
        ManifestRecord("x.png", "x.png", 0, "train"),
        ManifestRecord("x.png", "other.png", 1, "test"),
    ]
    with pytest.raises(ManifestError):
        CorpusManifest(records=records)


def test_bad_split_rejected():
    with pytest.raises(ManifestError):
        ManifestRecord("x.png", "x.png", 0, "holdout")


def test_malformed_line_rejected(tmp_path):
    manifest_path = tmp_path / "manifest.tsv"
    manifest_path.write_text("x.png\tonly-two-fields\n")
    with pytest.raises(ManifestError):
        load_manifest(manifest_path, check_files=False)


def test_non_integer_group_rejected(tmp_path):
    manifest_path = tmp_path / "manifest.tsv"
    manifest_path.write_text("x.png\tx.png\tseven\ttrain\n")
    with pytest.raises(ManifestError):
        load_manifest(manifest_path, check_files=False)


def test_for_split(tmp_path):
    records = [
        ManifestRecord("a.png", "a.png", 0, "train"),
        ManifestRecord("b.png", "b.png", 1, "val"),
        ManifestRecord("c.png", "c.png", 2, "test"),
    ]
    manifest = CorpusManifest(records=records)
    assert [r.image_id for r in manifest.for_split("train")] == ["a.png"]
    assert [r.image_id for r in manifest.for_split("train", "test")] == ["a.png", "c.png"]
