"""Learnable 3D-LUT color augmentation for image harmonization training."""

from .lut import (
    Lut3D,
    identity_lut,
    lookup,
    lookup_weights,
    apply_to_foreground,
    combine,
    parse_cube,
    serialize_cube,
)
from .basis import (
    LutCollection,
    BasisSet,
    KMeansConfig,
    generate_seed_collection,
    load_collection_from_dir,
    kmeans_cluster,
    init_basis,
)
from .augmentor import Augmentor, AugmentorConfig, train_augmentor
from .harmonize import (
    Harmonizer,
    AffineHarmonizer,
    AugTrainConfig,
    train_plain,
    train_dynamic,
    train_static,
    train_augmented_only,
    harmonize_image,
)
from .data import TrainPair, DatasetManifest, load_manifest, load_pair, make_toy_dataset
from .metrics import mse, fmse, fssim, diversity, dataset_diversity, bt_rank, MetricReport
from .checkpoint import (
    save_checkpoint,
    load_checkpoint,
    save_augmentor,
    load_augmentor,
    save_harmonizer,
    load_harmonizer,
)

__version__ = "0.1.0"

__all__ = [
    "Lut3D",
    "identity_lut",
    "lookup",
    "lookup_weights",
    "apply_to_foreground",
    "combine",
    "parse_cube",
    "serialize_cube",
    "LutCollection",
    "BasisSet",
    "KMeansConfig",
    "generate_seed_collection",
    "load_collection_from_dir",
    "kmeans_cluster",
    "init_basis",
    "Augmentor",
    "AugmentorConfig",
    "train_augmentor",
    "Harmonizer",
    "AffineHarmonizer",
    "AugTrainConfig",
    "train_plain",
    "train_dynamic",
    "train_static",
    "train_augmented_only",
    "harmonize_image",
    "TrainPair",
    "DatasetManifest",
    "load_manifest",
    "load_pair",
    "make_toy_dataset",
    "mse",
    "fmse",
    "fssim",
    "diversity",
    "dataset_diversity",
    "bt_rank",
    "MetricReport",
    "save_checkpoint",
    "load_checkpoint",
    "save_augmentor",
    "load_augmentor",
    "save_harmonizer",
    "load_harmonizer",
]
