"""End-to-end experiment plumbing: ingest, config, reports, reruns."""

import numpy as np
import pytest

from ndarchive.errors import InvalidInputError
from ndarchive.imagecore.raster import ImageGray, save_png
from ndarchive.imagecore.synth import SyntheticCorpusSpec, generate_corpus, write_corpus
from ndarchive.manifest import CorpusManifest, ManifestError, ManifestRecord, save_manifest
from ndarchive.neuralcore.encoder import EncoderSpec
from ndarchive.pipeline import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_EPOCHS,
    MODE_TO_PARTITION,
    ExperimentSpec,
    experiment_from_settings,
    ingest,
    parse_config_text,
    report_csv,
    run_experiment,
    train_model,
    training_records,
)
from ndarchive.training import TrainConfig

TINY_ENCODER = EncoderSpec(
    input_size=16, hidden_dim=8, repr_dim=8, proj_dim=4, patch_size=8
)


def corpus_on_disk(tmp_path, strength="none", groups=6, dups=3, seed=5):
    spec = SyntheticCorpusSpec(
        group_count=groups,
        duplicates_per_group=dups,
        image_size=16,
        variant_strength=strength,
        seed=seed,
    )
    images, manifest = generate_corpus(spec)
    manifest_path = write_corpus(images, manifest, tmp_path / "corpus")
    return manifest_path


def simclr_spec(**overrides):
    defaults = dict(
        method="simclr",
        training_partition="test",
        train_config=TrainConfig(mode="simclr", epochs=2, batch_size=4, seed=0),
        encoder=TINY_ENCODER,
        retrieval_repr="z",
    )
    defaults.update(overrides)
    return ExperimentSpec(**defaults)


class TestIngest:
    def test_manifest_ingest(self, tmp_path):
        manifest_path = corpus_on_disk(tmp_path)
        corpus = ingest(manifest_path)
        assert len(corpus.images) == 18
        assert corpus.skipped == ()
        for record in corpus.manifest.records:
            assert record.image_id in corpus.images
            assert record.group_id is not None

    def test_directory_ingest_uses_relative_ids(self, tmp_path, rng):
        root = tmp_path / "photos"
        (root / "sub").mkdir(parents=True)
        img = ImageGray(rng.integers(0, 256, (8, 8)).astype(np.float64) / 255.0)
        save_png(img, root / "a.png")
        save_png(img, root / "sub" / "b.png")
        (root / "notes.txt").write_text("not an image")
        corpus = ingest(root)
        assert sorted(corpus.images) == ["a.png", "sub/b.png"]
        record = corpus.manifest.records[0]
        assert record.group_id is None
        assert record.split == "test"

    def test_undecodable_file_skipped_not_fatal(self, tmp_path, rng):
        root = tmp_path / "photos"
        root.mkdir()
        img = ImageGray(rng.integers(0, 256, (8, 8)).astype(np.float64) / 255.0)
        save_png(img, root / "good.png")
        (root / "bad.png").write_bytes(b"this is not a png")
        corpus = ingest(root)
        assert sorted(corpus.images) == ["good.png"]
        assert len(corpus.skipped) == 1
        assert corpus.skipped[0].endswith("bad.png")

    def test_nothing_decodable_is_an_error(self, tmp_path):
        root = tmp_path / "photos"
        root.mkdir()
        (root / "bad.png").write_bytes(b"junk")
        with pytest.raises(InvalidInputError):
            ingest(root)

    def test_missing_path_is_an_error(self, tmp_path):
        with pytest.raises(InvalidInputError):
            ingest(tmp_path / "nowhere")

    def test_manifest_with_missing_file_names_it(self, tmp_path):
        path = tmp_path / "m.tsv"
        save_manifest(
            CorpusManifest([ManifestRecord("ghost", "ghost.png", 0, "test")]), path
        )
        with pytest.raises(ManifestError, match="ghost.png"):
            ingest(path)

    def test_reingest_is_identical(self, tmp_path):
        manifest_path = corpus_on_disk(tmp_path)
        first = ingest(manifest_path)
        second = ingest(manifest_path)
        assert first.manifest.records == second.manifest.records
        for image_id in first.images:
            assert np.array_equal(first.images[image_id].data, second.images[image_id].data)


class TestConfigParsing:
    def test_sections_comments_and_types(self):
        text = """
        # experiment definition
        method = "simclr"
        mode = "transductive"
        seed = 3

        [train]
        epochs = 12        # short run
        lr = 3e-4
        temperature = 0.5

        [encoder]
        input_size = 16
        """
        settings = parse_config_text(text)
        assert settings["method"] == "simclr"
        assert settings["mode"] == "transductive"
        assert settings["seed"] == 3
        assert settings["train.epochs"] == 12
        assert settings["train.lr"] == pytest.approx(3e-4)
        assert settings["train.temperature"] == 0.5
        assert settings["encoder.input_size"] == 16

    def test_booleans(self):
        assert parse_config_text("self_relevant = false") == {"self_relevant": False}

    @pytest.mark.parametrize(
        "text,fragment",
        [
            ("method simclr", "line 1"),
            ('method = "unterminated', "line 1"),
            ("[]", "line 1"),
            ("x = what", "line 1"),
            ("= 3", "line 1"),
        ],
    )
    def test_errors_carry_line_numbers(self, text, fragment):
        with pytest.raises(InvalidInputError, match=fragment):
            parse_config_text(text)

    def test_error_on_later_line_numbered(self):
        with pytest.raises(InvalidInputError, match="line 3"):
            parse_config_text('method = "phash"\n\nbroken line')


class TestExperimentFromSettings:
    def test_mode_to_partition_mapping(self):
        assert MODE_TO_PARTITION == {
            "inductive": "train",
            "combined": "train+test",
            "transductive": "test",
        }
        for mode, partition in MODE_TO_PARTITION.items():
            spec = experiment_from_settings({"method": "phash", "mode": mode})
            assert spec.training_partition == partition

    def test_explicit_partition_wins_over_mode(self):
        spec = experiment_from_settings(
            {"method": "phash", "mode": "inductive", "training_partition": "test"}
        )
        assert spec.training_partition == "test"

    def test_unknown_mode_rejected(self):
        with pytest.raises(InvalidInputError):
            experiment_from_settings({"method": "phash", "mode": "sideways"})

    def test_unknown_keys_rejected(self):
        with pytest.raises(InvalidInputError, match="epoch"):
            experiment_from_settings({"method": "simclr", "train.epoch": 3})
        with pytest.raises(InvalidInputError):
            experiment_from_settings({"method": "phash", "verbose": True})

    def test_neural_defaults(self):
        spec = experiment_from_settings({"method": "simclr"})
        assert spec.train_config.epochs == DEFAULT_EPOCHS
        assert spec.train_config.batch_size == DEFAULT_BATCH_SIZE
        assert spec.train_config.mode == "simclr"

    def test_seed_reaches_train_config(self):
        spec = experiment_from_settings({"method": "mae", "seed": 9})
        assert spec.seed == 9
        assert spec.train_config.seed == 9

    def test_hash_method_gets_no_train_config(self):
        spec = experiment_from_settings({"method": "average"})
        assert spec.train_config is None

    def test_encoder_section(self):
        spec = experiment_from_settings(
            {"method": "simclr", "encoder.input_size": 16, "encoder.hidden_dim": 8}
        )
        assert spec.encoder.input_size == 16
        assert spec.encoder.hidden_dim == 8

    def test_encoder_without_input_size_rejected(self):
        with pytest.raises(InvalidInputError):
            experiment_from_settings({"method": "simclr", "encoder.hidden_dim": 8})

    def test_unknown_method_rejected(self):
        with pytest.raises(InvalidInputError):
            experiment_from_settings({"method": "md5"})

    def test_mae_projection_retrieval_rejected(self):
        with pytest.raises(InvalidInputError):
            experiment_from_settings({"method": "mae", "retrieval_repr": "z"})


class TestPartitions:
    def test_training_records_cover_both_splits_when_combined(self, tmp_path):
        corpus = ingest(corpus_on_disk(tmp_path))
        manifest = corpus.manifest
        combined = training_records(manifest, "train+test")
        assert combined == manifest.for_split("train") + manifest.for_split("test")

    def test_empty_training_partition_rejected(self, tmp_path, rng):
        root = tmp_path / "photos"
        root.mkdir()
        img = ImageGray(rng.integers(0, 256, (16, 16)).astype(np.float64) / 255.0)
        save_png(img, root / "only.png")
        corpus = ingest(root)  # directory ingest: everything lands in test
        with pytest.raises(InvalidInputError, match="train"):
            train_model(simclr_spec(training_partition="train"), corpus)


class TestHashExperiments:
    def test_perfect_copies_score_top_marks(self, tmp_path):
        corpus = ingest(corpus_on_disk(tmp_path, strength="none", dups=4))
        for method in ("phash", "average", "blockmean"):
            result = run_experiment(ExperimentSpec(method=method), corpus)
            assert result.report.metric("map_at_4") == 1.0

    def test_report_csv_shape(self, tmp_path):
        corpus = ingest(corpus_on_disk(tmp_path))
        result = run_experiment(ExperimentSpec(method="phash"), corpus)
        text = report_csv(result.report)
        lines = text.splitlines()
        assert lines[0] == "key,value"
        assert lines[1] == "method,phash"
        values = dict(line.split(",", 1) for line in lines[1:])
        # Metric values print via repr, so parsing them back is lossless.
        assert float(values["map_at_4"]) == result.report.metric("map_at_4")

    def test_rerun_writes_identical_artifacts(self, tmp_path):
        corpus = ingest(corpus_on_disk(tmp_path))
        spec = ExperimentSpec(method="blockmean")
        run_experiment(spec, corpus, out_dir=tmp_path / "one")
        run_experiment(spec, corpus, out_dir=tmp_path / "two")
        for name in ("report.csv", "index.ndix"):
            assert (tmp_path / "one" / name).read_bytes() == (
                tmp_path / "two" / name
            ).read_bytes()


class TestNeuralExperiments:
    def test_simclr_smoke_writes_artifacts(self, tmp_path):
        corpus = ingest(corpus_on_disk(tmp_path))
        result = run_experiment(simclr_spec(), corpus, out_dir=tmp_path / "run")
        assert 0.0 <= result.report.metric("map_at_4") <= 1.0
        assert result.report.metric("p_at_1") >= 0.0
        assert len(result.trace) == 2
        for name in ("checkpoint.ndck", "trace.csv", "index.ndix", "report.csv", "report.txt"):
            assert (tmp_path / "run" / name).exists()

    def test_rerun_byte_identical_checkpoint_and_report(self, tmp_path):
        corpus = ingest(corpus_on_disk(tmp_path))
        spec = simclr_spec()
        run_experiment(spec, corpus, out_dir=tmp_path / "one")
        run_experiment(spec, corpus, out_dir=tmp_path / "two")
        for name in ("checkpoint.ndck", "report.csv", "index.ndix", "trace.csv"):
            assert (tmp_path / "one" / name).read_bytes() == (
                tmp_path / "two" / name
            ).read_bytes()

    def test_simclr_never_reads_labels(self, tmp_path):
        corpus = ingest(corpus_on_disk(tmp_path))
        # Same pixels, group ids scrambled: a label-blind trainer cannot
        # tell the difference.
        scrambled_records = [
            ManifestRecord(r.image_id, r.path, (r.group_id * 7 + 3) % 100, r.split)
            for r in corpus.manifest.records
        ]
        scrambled = type(corpus)(
            CorpusManifest(scrambled_records), corpus.images, corpus.skipped
        )
        spec = simclr_spec()
        _, params_a, _, _ = train_model(spec, corpus)
        _, params_b, _, _ = train_model(spec, scrambled)
        assert set(params_a) == set(params_b)
        for name in params_a:
            assert np.array_equal(params_a[name].values, params_b[name].values)

    def test_supervised_needs_labels(self, tmp_path, rng):
        root = tmp_path / "photos"
        root.mkdir()
        for i in range(4):
            img = ImageGray(rng.integers(0, 256, (16, 16)).astype(np.float64) / 255.0)
            save_png(img, root / f"img{i}.png")
        corpus = ingest(root)  # no group ids
        spec = ExperimentSpec(
            method="supervised-ce",
            training_partition="test",
            train_config=TrainConfig(mode="cross-entropy", epochs=1, batch_size=2),
            encoder=TINY_ENCODER,
        )
        with pytest.raises(InvalidInputError, match="label"):
            train_model(spec, corpus)

    def test_val_loss_reported_when_val_split_exists(self, tmp_path):
        manifest_path = corpus_on_disk(tmp_path, groups=10, dups=2)
        corpus = ingest(manifest_path)
        assert corpus.manifest.for_split("val")
        result = run_experiment(simclr_spec(training_partition="train"), corpus)
        assert result.report.metric("val_loss") > 0.0

    def test_unlabeled_eval_rejected(self, tmp_path, rng):
        root = tmp_path / "photos"
        root.mkdir()
        img = ImageGray(rng.integers(0, 256, (16, 16)).astype(np.float64) / 255.0)
        save_png(img, root / "a.png")
        corpus = ingest(root)
        with pytest.raises(InvalidInputError, match="group"):
            run_experiment(ExperimentSpec(method="phash"), corpus)
