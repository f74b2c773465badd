"""Near-duplicate detection for scanned photo collections.

Perceptual-hash baselines and a small trainable encoder share one
retrieval and clustering layer; a CLI and an HTTP review service sit on
top. See the README for the workflow.
"""

from ndarchive.errors import (
    DegenerateEmbeddingError,
    IncomparableHashError,
    InvalidInputError,
    ManifestError,
    NdarchiveError,
    NotFoundError,
    NumericFailureError,
)
from ndarchive.hashing import PerceptualHash, compute_hash, hamming, parse_hash
from ndarchive.imagecore import (
    AugmentationSpec,
    ImageGray,
    SyntheticCorpusSpec,
    augment,
    augment_chain,
    crop_resize,
    dct2d,
    generate_corpus,
    idct2d,
    load_image,
    resize,
    save_png,
    to_grayscale,
    write_corpus,
)
from ndarchive.manifest import CorpusManifest, ManifestRecord, load_manifest, save_manifest
from ndarchive.neuralcore import (
    Embedding,
    EncoderSpec,
    MaskPlan,
    Tensor,
    encode,
    init_encoder_params,
    init_mae_params,
    load_checkpoint,
    mae_embed,
    mae_forward,
    save_checkpoint,
)
from ndarchive.losses import (
    ContrastiveBatch,
    SupervisedBatch,
    Triplet,
    cross_entropy_loss,
    nt_xent_loss,
    triplet_loss,
)
from ndarchive.training import (
    EpochTrace,
    TrainConfig,
    mae_train,
    simclr_train,
    supervised_train,
    two_views,
)
from ndarchive.retrieval import (
    DuplicateCluster,
    Index,
    IndexEntry,
    RetrievalResult,
    average_precision_at_k,
    cluster,
    load_index,
    map_at_k,
    medoid,
    precision_at_k,
    query,
    save_index,
)
from ndarchive.pipeline import (
    Corpus,
    ExperimentReport,
    ExperimentResult,
    ExperimentSpec,
    ingest,
    run_experiment,
    train_model,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentationSpec",
    "ContrastiveBatch",
    "Corpus",
    "CorpusManifest",
    "DegenerateEmbeddingError",
    "DuplicateCluster",
    "Embedding",
    "EncoderSpec",
    "EpochTrace",
    "ExperimentReport",
    "ExperimentResult",
    "ExperimentSpec",
    "ImageGray",
    "IncomparableHashError",
    "Index",
    "IndexEntry",
    "InvalidInputError",
    "ManifestError",
    "ManifestRecord",
    "MaskPlan",
    "NdarchiveError",
    "NotFoundError",
    "NumericFailureError",
    "PerceptualHash",
    "RetrievalResult",
    "SupervisedBatch",
    "SyntheticCorpusSpec",
    "Tensor",
    "TrainConfig",
    "Triplet",
    "augment",
    "augment_chain",
    "average_precision_at_k",
    "cluster",
    "compute_hash",
    "crop_resize",
    "cross_entropy_loss",
    "dct2d",
    "encode",
    "generate_corpus",
    "hamming",
    "idct2d",
    "ingest",
    "init_encoder_params",
    "init_mae_params",
    "load_checkpoint",
    "load_image",
    "load_index",
    "load_manifest",
    "mae_embed",
    "mae_forward",
    "mae_train",
    "map_at_k",
    "medoid",
    "nt_xent_loss",
    "parse_hash",
    "precision_at_k",
    "query",
    "resize",
    "run_experiment",
    "save_checkpoint",
    "save_index",
    "save_manifest",
    "save_png",
    "simclr_train",
    "supervised_train",
    "to_grayscale",
    "train_model",
    "triplet_loss",
    "two_views",
    "write_corpus",
]
