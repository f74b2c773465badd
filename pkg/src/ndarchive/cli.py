"""Command-line entry point.

Subcommands cover the whole workflow: generate or ingest a corpus, hash
or embed it, run experiments, inspect neighbors and clusters, and serve
the review API. Exit codes: 0 success, 1 invalid input (including bad
flags), 2 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from ndarchive.errors import InvalidInputError, NdarchiveError, NumericFailureError
from ndarchive.hashing import HASH_BITS, compute_hash
from ndarchive.imagecore.raster import load_image
from ndarchive.imagecore.synth import STRENGTHS, SyntheticCorpusSpec, generate_corpus, write_corpus
from ndarchive.neuralcore.checkpoint import load_checkpoint
from ndarchive.pipeline import (
    HASH_METHODS,
    METHODS,
    MODE_TO_PARTITION,
    default_data_dir,
    embed_entry,
    experiment_from_settings,
    ingest,
    load_config,
    report_table,
    run_experiment,
    train_model,
)
from ndarchive.retrieval import Index, IndexEntry, cluster, load_index, query, save_index
from ndarchive.service import DEFAULT_BIND, serve


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="ndarchive", description="near-duplicate image detection")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("synth", help="generate a synthetic grouped corpus")
    p.add_argument("--groups", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--per-group", type=int, default=4)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--strength", choices=STRENGTHS, default="mild")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("ingest", help="scan a directory or manifest into a corpus")
    p.add_argument("path")
    p.add_argument("--manifest-out", help="write the discovered manifest here")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("hash", help="perceptual-hash one image or a whole corpus")
    p.add_argument("--algo", choices=sorted(HASH_BITS), default="phash")
    p.add_argument("--image", help="hash a single image file")
    p.add_argument("--corpus", help="hash every image of a corpus")
    p.add_argument("--out", help="write the corpus hashes as an index file")
    p.set_defaults(func=_cmd_hash)

    p = sub.add_parser("train", help="fit an encoder on a corpus partition")
    _experiment_flags(p, require_method=True)
    p.add_argument("--out", help="artifact directory (default under the data dir)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("embed", help="embed a corpus with a trained checkpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--repr", choices=("h", "z"), default="h")
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="all")
    p.add_argument("--out", required=True, help="index file to write")
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("query", help="rank an indexed image's neighbors")
    p.add_argument("--index", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--k", type=int, default=5)
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("evaluate", help="run an experiment and print its metrics")
    _experiment_flags(p, require_method=False)
    p.add_argument("--out", help="artifact directory")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("cluster", help="list duplicate clusters at a threshold")
    p.add_argument("--index", required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--singletons", action="store_true")
    p.set_defaults(func=_cmd_cluster)

    p = sub.add_parser("serve", help="serve the review API over a corpus and index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--bind", default=None, help="host:port (or NDARCHIVE_BIND)")
    p.add_argument("--review-log", default=None)
    p.add_argument("--threshold", type=float, default=0.1)
    p.add_argument("--ui", default=None, help="directory of built UI assets")
    p.set_defaults(func=_cmd_serve)

    return parser


def _experiment_flags(p: argparse.ArgumentParser, require_method: bool) -> None:
    p.add_argument("--corpus", required=True)
    p.add_argument("--method", choices=METHODS, required=require_method)
    p.add_argument("--mode", choices=sorted(MODE_TO_PARTITION))
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--repr", choices=("h", "z"))
    p.add_argument("--input-size", type=int)
    p.add_argument("--init-from", help="checkpoint to start training from")


def _experiment_settings(args) -> dict[str, object]:
    settings = load_config(args.config) if args.config else {}
    if args.method:
        settings["method"] = args.method
    if args.mode:
        settings.pop("training_partition", None)
        settings["mode"] = args.mode
    if args.seed is not None:
        settings["seed"] = args.seed
    if args.epochs is not None:
        settings["train.epochs"] = args.epochs
    if args.batch_size is not None:
        settings["train.batch_size"] = args.batch_size
    if args.repr:
        settings["retrieval_repr"] = args.repr
    if args.input_size is not None:
        settings["encoder.input_size"] = args.input_size
    if args.init_from:
        settings["init_from"] = args.init_from
    return settings


def _cmd_synth(args) -> int:
    spec = SyntheticCorpusSpec(
        group_count=args.groups,
        duplicates_per_group=args.per_group,
        image_size=args.size,
        variant_strength=args.strength,
        seed=args.seed,
    )
    images, manifest = generate_corpus(spec)
    manifest_path = write_corpus(images, manifest, args.out)
    print(f"wrote {len(images)} images in {args.groups} groups to {args.out}")
    print(f"manifest: {manifest_path}")
    return 0


def _cmd_ingest(args) -> int:
    corpus = ingest(args.path)
    print(f"{len(corpus.manifest)} images ingested from {args.path}")
    for path in corpus.skipped:
        print(f"skipped (undecodable): {path}", file=sys.stderr)
    if args.manifest_out:
        from ndarchive.manifest import save_manifest

        save_manifest(corpus.manifest, args.manifest_out)
        print(f"manifest: {args.manifest_out}")
    return 0


def _cmd_hash(args) -> int:
    if bool(args.image) == bool(args.corpus):
        raise InvalidInputError("hash needs exactly one of --image or --corpus")
    if args.image:
        print(compute_hash(load_image(args.image), args.algo))
        return 0
    corpus = ingest(args.corpus)
    entries = []
    for record in corpus.manifest:
        h = compute_hash(corpus.images[record.image_id], args.algo)
        entries.append(IndexEntry(record.image_id, h, record.group_id))
        print(f"{record.image_id}\t{h}")
    if args.out:
        save_index(args.out, Index(entries))
        print(f"index: {args.out}", file=sys.stderr)
    return 0


def _cmd_train(args) -> int:
    spec = experiment_from_settings(_experiment_settings(args))
    corpus = ingest(args.corpus)
    out = Path(args.out) if args.out else default_data_dir() / "train"
    encoder, _, trace, n_train = train_model(spec, corpus, out)
    if trace:
        print(f"trained on {n_train} images for {len(trace)} epochs")
        print(f"loss: first epoch {trace[0].loss:.6f}, last epoch {trace[-1].loss:.6f}")
    else:
        print(f"0 epochs requested; wrote the initial parameters for {n_train} images")
    print(f"artifacts: {out}")
    return 0


def _cmd_embed(args) -> int:
    encoder, params = load_checkpoint(args.checkpoint)
    corpus = ingest(args.corpus)
    if args.split == "all":
        records = list(corpus.manifest)
    else:
        records = corpus.manifest.for_split(args.split)
    if not records:
        raise InvalidInputError(f"no images in split {args.split!r}")
    entries = [
        embed_entry(r, corpus.images[r.image_id], params, encoder, args.repr)
        for r in records
    ]
    save_index(args.out, Index(entries))
    print(f"embedded {len(entries)} images -> {args.out}")
    return 0


def _cmd_query(args) -> int:
    index = load_index(args.index)
    result = query(index, args.image, args.k)
    for rank, (image_id, distance) in enumerate(result.ranked, start=1):
        print(f"{rank},{image_id},{distance!r}")
    return 0


def _cmd_evaluate(args) -> int:
    settings = _experiment_settings(args)
    if "method" not in settings:
        raise InvalidInputError("evaluate needs --method (or a config file setting it)")
    spec = experiment_from_settings(settings)
    corpus = ingest(args.corpus)
    result = run_experiment(spec, corpus, args.out)
    print(report_table(result.report))
    return 0


def _cmd_cluster(args) -> int:
    index = load_index(args.index)
    for c in cluster(index, args.threshold):
        if len(c.member_ids) < 2 and not args.singletons:
            continue
        print(f"{c.cluster_id}\t{' '.join(c.member_ids)}")
    return 0


def _cmd_serve(args) -> int:
    index = load_index(args.index)
    corpus_path = Path(args.corpus)
    if corpus_path.is_file():
        from ndarchive.manifest import load_manifest

        manifest = load_manifest(corpus_path, check_files=True)
        root = corpus_path.parent
    else:
        corpus = ingest(corpus_path)
        manifest = corpus.manifest
        root = corpus_path
    bind = args.bind or os.environ.get("NDARCHIVE_BIND", DEFAULT_BIND)
    review_log = args.review_log
    if review_log is None:
        data_dir = default_data_dir()
        data_dir.mkdir(parents=True, exist_ok=True)
        review_log = data_dir / "reviews.log"
    serve(
        index,
        manifest,
        root,
        review_log,
        bind=bind,
        default_threshold=args.threshold,
        ui_dir=args.ui,
    )
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else 1
    except NumericFailureError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except NdarchiveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # anything else is a runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
