"""Corpus ingestion, experiment running, and configuration.

An experiment fixes a method (three hash baselines, two supervised
objectives, two self-supervised ones), the partition its model trains
on, and a seed. Evaluation always runs on the test partition: every
test image queries an index over the whole test partition and the
ranking metrics are averaged. Self-supervised training sees pixels
only; group labels never reach those trainers.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ndarchive.errors import InvalidInputError
from ndarchive.hashing import compute_hash
from ndarchive.imagecore.raster import ImageGray, load_image
from ndarchive.losses import (
    ContrastiveBatch,
    SupervisedBatch,
    Triplet,
    cross_entropy_loss,
    nt_xent_loss,
    triplet_loss,
)
from ndarchive.manifest import CorpusManifest, ManifestRecord, load_manifest
from ndarchive.neuralcore.autodiff import Tensor
from ndarchive.neuralcore.checkpoint import load_checkpoint, save_checkpoint
from ndarchive.neuralcore.encoder import (
    EncoderSpec,
    encode,
    init_encoder_params,
    init_mae_params,
    mae_embed,
    make_mask_plan,
    mae_forward,
)
from ndarchive.retrieval import (
    Index,
    IndexEntry,
    map_at_k,
    precision_at_k,
    query,
    relevant_sets,
    save_index,
)
from ndarchive.training import (
    EpochTrace,
    TrainConfig,
    class_order,
    classifier_logits,
    mae_train,
    sample_triplet,
    save_trace,
    simclr_train,
    supervised_train,
    two_views,
)

HASH_METHODS = ("average", "phash", "blockmean")
NEURAL_METHODS = ("supervised-ce", "supervised-triplet", "simclr", "mae")
METHODS = HASH_METHODS + NEURAL_METHODS

TRAINING_PARTITIONS = ("train", "train+test", "test")
# CLI-facing names for the three training partitions.
MODE_TO_PARTITION = {
    "inductive": "train",
    "combined": "train+test",
    "transductive": "test",
}

_CONFIG_MODE = {
    "supervised-ce": "cross-entropy",
    "supervised-triplet": "triplet",
    "simclr": "simclr",
    "mae": "mae",
}

MAP_K = 4
PRECISION_KS = (1, 5, 10, 50)

_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


def default_data_dir() -> Path:
    """Artifact root: $NDARCHIVE_DATA_DIR or ./ndarchive-data."""
    return Path(os.environ.get("NDARCHIVE_DATA_DIR", "ndarchive-data"))


@dataclass
class Corpus:
    """A manifest plus its decoded images, keyed by image_id."""

    manifest: CorpusManifest
    images: dict[str, ImageGray]
    skipped: tuple[str, ...] = ()

    def images_for(self, records: Sequence[ManifestRecord]) -> list[ImageGray]:
        return [self.images[r.image_id] for r in records]


def ingest(path: str | Path) -> Corpus:
    """Load a corpus from a manifest file or an image directory.

    A directory is scanned recursively for PNG/JPEG files; ids are the
    forward-slash relative paths, groups unknown, split test (everything
    queryable). Files that fail to decode are skipped and listed in
    ``Corpus.skipped``, never fatal. An empty result is an error.
    """
    path = Path(path)
    if path.is_file():
        manifest = load_manifest(path, check_files=True)
        base = path.parent
        candidates = [(r, base / r.path) for r in manifest.records]
    elif path.is_dir():
        files = sorted(
            p for p in path.rglob("*")
            if p.is_file() and p.suffix.lower() in _IMAGE_SUFFIXES
        )
        candidates = []
        for p in files:
            rel = p.relative_to(path).as_posix()
            candidates.append((ManifestRecord(rel, rel, None, "test"), p))
    else:
        raise InvalidInputError(f"no such file or directory: {path}")

    images: dict[str, ImageGray] = {}
    kept: list[ManifestRecord] = []
    skipped: list[str] = []
    for record, file_path in candidates:
        try:
            images[record.image_id] = load_image(file_path)
            kept.append(record)
        except Exception:
            skipped.append(str(file_path))
    if not kept:
        raise InvalidInputError(f"no decodable images under {path}")
    return Corpus(CorpusManifest(kept), images, tuple(skipped))


@dataclass(frozen=True)
class ExperimentSpec:
    """What to run: method, training partition, and all hyperparameters."""

    method: str
    training_partition: str = "train"
    eval_partition: str = "test"
    train_config: TrainConfig | None = None
    encoder: EncoderSpec | None = None
    seed: int = 0
    retrieval_repr: str = "h"
    self_relevant: bool = True
    init_from: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown method {self.method!r}")
        if self.training_partition not in TRAINING_PARTITIONS:
            raise InvalidInputError(
                f"training_partition must be one of {TRAINING_PARTITIONS}"
            )
        if self.eval_partition != "test":
            raise InvalidInputError("evaluation always runs on the test partition")
        if self.retrieval_repr not in ("h", "z"):
            raise InvalidInputError("retrieval_repr must be 'h' or 'z'")
        if self.method in NEURAL_METHODS:
            if self.train_config is None:
                raise InvalidInputError(f"method {self.method!r} needs a train_config")
            wanted = _CONFIG_MODE[self.method]
            if self.train_config.mode != wanted:
                raise InvalidInputError(
                    f"method {self.method!r} requires config mode {wanted!r}, "
                    f"got {self.train_config.mode!r}"
                )
            if self.method == "mae" and self.retrieval_repr != "h":
                raise InvalidInputError("mae has no projection; retrieval_repr must be 'h'")


@dataclass(frozen=True)
class ExperimentReport:
    method: str
    training_partition: str
    seed: int
    config_hash: str
    n_train: int
    n_eval: int
    metrics: tuple[tuple[str, float], ...]

    def metric(self, name: str) -> float:
        for key, value in self.metrics:
            if key == name:
                return value
        raise KeyError(name)


@dataclass(frozen=True)
class ExperimentResult:
    report: ExperimentReport
    index: Index
    trace: tuple[EpochTrace, ...]


def report_csv(report: ExperimentReport) -> str:
    """Key,value rows: provenance first, then metrics in fixed order."""
    rows = [
        ("method", report.method),
        ("training_partition", report.training_partition),
        ("seed", str(report.seed)),
        ("config_hash", report.config_hash),
        ("n_train", str(report.n_train)),
        ("n_eval", str(report.n_eval)),
    ]
    rows.extend((name, repr(value)) for name, value in report.metrics)
    return "key,value\n" + "\n".join(f"{k},{v}" for k, v in rows) + "\n"


def report_table(report: ExperimentReport) -> str:
    """Aligned two-column rendering of the same report."""
    rows = [
        ("method", report.method),
        ("training partition", report.training_partition),
        ("seed", str(report.seed)),
        ("config hash", report.config_hash),
        ("train images", str(report.n_train)),
        ("eval images", str(report.n_eval)),
    ]
    rows.extend((name.replace("_", " "), f"{value:.4f}") for name, value in report.metrics)
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def _config_hash(spec: ExperimentSpec, encoder: EncoderSpec | None) -> str:
    canonical = "|".join(
        [
            spec.method,
            spec.training_partition,
            spec.eval_partition,
            str(spec.seed),
            spec.retrieval_repr,
            str(spec.self_relevant),
            repr(spec.train_config),
            repr(encoder),
            str(spec.init_from),
        ]
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def training_records(manifest: CorpusManifest, partition: str) -> list[ManifestRecord]:
    """The manifest records a given training partition consists of."""
    if partition not in TRAINING_PARTITIONS:
        raise InvalidInputError(f"training_partition must be one of {TRAINING_PARTITIONS}")
    if partition == "train+test":
        return manifest.for_split("train") + manifest.for_split("test")
    return manifest.for_split(partition)


def _initial_params(
    spec: ExperimentSpec, encoder: EncoderSpec
) -> tuple[EncoderSpec, dict[str, Tensor]]:
    if spec.init_from is not None:
        loaded_spec, params = load_checkpoint(spec.init_from)
        if spec.encoder is not None and loaded_spec != spec.encoder:
            raise InvalidInputError("checkpoint encoder shape disagrees with the spec")
        return loaded_spec, params
    if spec.method == "mae":
        return encoder, init_mae_params(encoder, spec.seed)
    return encoder, init_encoder_params(encoder, spec.seed)


def embed_entry(
    record: ManifestRecord,
    img: ImageGray,
    params: dict[str, Tensor],
    encoder: EncoderSpec,
    retrieval_repr: str = "h",
) -> IndexEntry:
    """Index entry for one image under trained parameters.

    Masked-autoencoder parameter sets (detected by their mask token) have
    no projection, so only the pooled representation is available.
    """
    if "mae.mask_token" in params:
        if retrieval_repr != "h":
            raise InvalidInputError("mae has no projection; retrieval_repr must be 'h'")
        descriptor = mae_embed(img, params, encoder)
    else:
        h, z = encode(img, params, encoder)
        descriptor = z if retrieval_repr == "z" else h
    return IndexEntry(record.image_id, descriptor, record.group_id)


def train_model(
    spec: ExperimentSpec, corpus: Corpus, out_dir: str | Path | None = None
) -> tuple[EncoderSpec, dict[str, Tensor], tuple[EpochTrace, ...], int]:
    """Fit the spec's method on its training partition.

    Returns (encoder shape, trained params, loss trace, image count).
    Self-supervised modes receive bare pixel lists; labels stay behind in
    the manifest. With ``out_dir`` set, the checkpoint and trace land
    there.
    """
    if spec.method not in NEURAL_METHODS:
        raise InvalidInputError(f"method {spec.method!r} has nothing to train")
    train_recs = training_records(corpus.manifest, spec.training_partition)
    if not train_recs:
        raise InvalidInputError(f"training partition {spec.training_partition!r} is empty")
    train_images = corpus.images_for(train_recs)
    encoder = spec.encoder or EncoderSpec(input_size=train_images[0].width)
    encoder, params = _initial_params(spec, encoder)
    config = spec.train_config

    if spec.method == "simclr":
        params, epoch_trace = simclr_train(train_images, params, encoder, config)
    elif spec.method == "mae":
        params, epoch_trace = mae_train(train_images, params, encoder, config)
    else:
        group_ids = [r.group_id for r in train_recs]
        if any(g is None for g in group_ids):
            raise InvalidInputError(
                f"method {spec.method!r} needs group labels on the training partition"
            )
        params, epoch_trace = supervised_train(
            train_images, [str(g) for g in group_ids], params, encoder, config
        )

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out / "checkpoint.ndck", encoder, params)
        save_trace(out / "trace.csv", list(epoch_trace))

    return encoder, params, tuple(epoch_trace), len(train_recs)


def _held_out_loss(
    records: Sequence[ManifestRecord],
    corpus: Corpus,
    params: dict[str, Tensor],
    encoder: EncoderSpec,
    spec: ExperimentSpec,
    train_groups: Sequence[int],
) -> float | None:
    """One forward pass of the training objective on held-out images.

    Reported for trend-watching only; nothing is selected by it. Returns
    None when the partition cannot support the objective (for instance a
    validation group unseen by the classifier head).
    """
    config = spec.train_config
    images = corpus.images_for(records)
    rng = np.random.default_rng([spec.seed, 0x76A1])
    if config.mode == "simclr":
        if not images:
            return None
        views: list[ImageGray] = []
        for img in images:
            a, b = two_views(img, rng)
            views.extend((a, b))
        batch = ContrastiveBatch(
            np.stack([encode(v, params, encoder)[1].values for v in views])
        )
        return nt_xent_loss(batch, config.temperature)
    if config.mode == "mae":
        losses = []
        for img in images:
            plan = make_mask_plan(encoder.patch_count, config.mask_ratio, rng)
            _, loss = mae_forward(img, plan, params, encoder, config.mae_loss_scope)
            losses.append(loss)
        return float(np.mean(losses)) if losses else None
    labels = [r.group_id for r in records]
    if any(g is None for g in labels):
        return None
    if config.mode == "cross-entropy":
        classes = class_order([str(g) for g in train_groups])
        index_of = {g: c for c, g in enumerate(classes)}
        if any(str(g) not in index_of for g in labels):
            return None
        logits = classifier_logits(images, params, encoder)
        batch = SupervisedBatch(logits, np.array([index_of[str(g)] for g in labels]))
        return cross_entropy_loss(batch)
    # triplet: one sampled triplet per eligible anchor
    group_strs = [str(g) for g in labels]
    counts: dict[str, int] = {}
    for g in group_strs:
        counts[g] = counts.get(g, 0) + 1
    anchors = [i for i, g in enumerate(group_strs) if counts[g] >= 2]
    if not anchors or len(counts) < 2:
        return None
    trips = []
    for anchor in anchors:
        a, p, n = sample_triplet(group_strs, anchor, rng)
        trips.append(
            Triplet(
                encode(images[a], params, encoder)[0].values,
                encode(images[p], params, encoder)[0].values,
                encode(images[n], params, encoder)[0].values,
            )
        )
    return triplet_loss(trips, config.margin)


def run_experiment(
    spec: ExperimentSpec, corpus: Corpus, out_dir: str | Path | None = None
) -> ExperimentResult:
    """Train (when the method calls for it), index the test partition,
    and score every test image as a query against it.

    Reports mAP@4 and precision at the cutoffs that fit the index, plus
    a held-out loss when a labeled/usable validation partition exists.
    With ``out_dir`` set, the index, checkpoint, loss trace, and report
    are written there.
    """
    manifest = corpus.manifest
    eval_records = manifest.for_split("test")
    if not eval_records:
        raise InvalidInputError("test partition is empty; nothing to evaluate")
    if any(r.group_id is None for r in eval_records):
        raise InvalidInputError("evaluation needs group labels on every test image")

    trace: tuple[EpochTrace, ...] = ()
    params: dict[str, Tensor] | None = None
    encoder: EncoderSpec | None = None
    n_train = 0
    val_loss: float | None = None

    if spec.method in HASH_METHODS:
        entries = [
            IndexEntry(
                r.image_id, compute_hash(corpus.images[r.image_id], spec.method), r.group_id
            )
            for r in eval_records
        ]
    else:
        encoder, params, trace, n_train = train_model(spec, corpus, out_dir)

        val_records = manifest.for_split("val")
        if val_records:
            train_groups = [
                r.group_id
                for r in training_records(manifest, spec.training_partition)
                if r.group_id is not None
            ]
            val_loss = _held_out_loss(
                val_records, corpus, params, encoder, spec, train_groups
            )

        entries = [
            embed_entry(r, corpus.images[r.image_id], params, encoder, spec.retrieval_repr)
            for r in eval_records
        ]

    index = Index(entries)
    usable_ks = [k for k in PRECISION_KS if k <= len(index)]
    k_max = max([MAP_K] + usable_ks)
    results = [query(index, r.image_id, k_max) for r in eval_records]
    relevance = relevant_sets(index, include_self=spec.self_relevant)

    metrics: list[tuple[str, float]] = [
        (f"map_at_{MAP_K}", map_at_k(results, relevance, MAP_K))
    ]
    for k in usable_ks:
        mean_p = float(
            np.mean([precision_at_k(res, relevance[res.query_id], k) for res in results])
        )
        metrics.append((f"p_at_{k}", mean_p))
    if val_loss is not None:
        metrics.append(("val_loss", val_loss))

    report = ExperimentReport(
        method=spec.method,
        training_partition=spec.training_partition,
        seed=spec.seed,
        config_hash=_config_hash(spec, encoder),
        n_train=n_train,
        n_eval=len(eval_records),
        metrics=tuple(metrics),
    )

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_index(out / "index.ndix", index)
        (out / "report.csv").write_text(report_csv(report), encoding="utf-8")
        (out / "report.txt").write_text(report_table(report) + "\n", encoding="utf-8")

    return ExperimentResult(report, index, trace)


# -- configuration ----------------------------------------------------------

def parse_config_text(text: str) -> dict[str, object]:
    """Parse a key = value config with optional [section] headers.

    Values are quoted strings, integers, floats, or true/false. Section
    names prefix keys with a dot, so `[train]` + `epochs = 30` yields
    `train.epochs`. Comments start with #.
    """
    settings: dict[str, object] = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if not section:
                raise InvalidInputError(f"config line {lineno}: empty section name")
            continue
        if "=" not in line:
            raise InvalidInputError(f"config line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise InvalidInputError(f"config line {lineno}: empty key")
        full_key = f"{section}.{key}" if section else key
        settings[full_key] = _parse_config_value(value.strip(), lineno)
    return settings


def _parse_config_value(value: str, lineno: int) -> object:
    if value.startswith('"'):
        if len(value) < 2 or not value.endswith('"'):
            raise InvalidInputError(f"config line {lineno}: unterminated string")
        return value[1:-1]
    value = value.split("#", 1)[0].strip()
    if value in ("true", "false"):
        return value == "true"
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        raise InvalidInputError(
            f"config line {lineno}: cannot parse value {value!r} "
            "(strings must be double-quoted)"
        ) from None


def load_config(path: str | Path) -> dict[str, object]:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


_TOP_KEYS = {
    "method", "mode", "training_partition", "seed", "retrieval_repr",
    "self_relevant", "init_from",
}
_TRAIN_KEYS = {
    "epochs", "batch_size", "lr", "lr_decay", "decay_every", "temperature",
    "margin", "mask_ratio", "mae_loss_scope",
}
_ENCODER_KEYS = {"input_size", "hidden_dim", "repr_dim", "proj_dim", "patch_size"}

DEFAULT_EPOCHS = 30
DEFAULT_BATCH_SIZE = 16


def experiment_from_settings(settings: Mapping[str, object]) -> ExperimentSpec:
    """Build an ExperimentSpec from flat config keys; typos are errors."""
    for key in settings:
        section, _, name = key.partition(".")
        ok = (
            (not name and section in _TOP_KEYS)
            or (section == "train" and name in _TRAIN_KEYS)
            or (section == "encoder" and name in _ENCODER_KEYS)
        )
        if not ok:
            raise InvalidInputError(f"unknown config key {key!r}")

    method = settings.get("method")
    if not isinstance(method, str):
        raise InvalidInputError("config must set method to a string")

    if "training_partition" in settings:
        partition = str(settings["training_partition"])
    else:
        mode = str(settings.get("mode", "inductive"))
        if mode not in MODE_TO_PARTITION:
            raise InvalidInputError(
                f"mode must be one of {sorted(MODE_TO_PARTITION)}, got {mode!r}"
            )
        partition = MODE_TO_PARTITION[mode]

    seed = int(settings.get("seed", 0))

    train_config = None
    if method in NEURAL_METHODS:
        kwargs: dict[str, object] = {
            key: settings[f"train.{key}"]
            for key in _TRAIN_KEYS
            if f"train.{key}" in settings
        }
        kwargs.setdefault("epochs", DEFAULT_EPOCHS)
        kwargs.setdefault("batch_size", DEFAULT_BATCH_SIZE)
        train_config = TrainConfig(
            mode=_CONFIG_MODE[method], seed=seed, **kwargs  # type: ignore[arg-type]
        )

    encoder = None
    if any(key.startswith("encoder.") for key in settings):
        enc_kwargs = {
            key: int(settings[f"encoder.{key}"])
            for key in _ENCODER_KEYS
            if f"encoder.{key}" in settings
        }
        if "input_size" not in enc_kwargs:
            raise InvalidInputError("encoder settings need encoder.input_size")
        encoder = EncoderSpec(**enc_kwargs)

    return ExperimentSpec(
        method=method,
        training_partition=partition,
        train_config=train_config,
        encoder=encoder,
        seed=seed,
        retrieval_repr=str(settings.get("retrieval_repr", "h")),
        self_relevant=bool(settings.get("self_relevant", True)),
        init_from=(str(settings["init_from"]) if "init_from" in settings else None),
    )
