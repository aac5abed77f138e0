"""Graph contrastive learning with topology isomorphism expertise."""

__version__ = "0.1.0"

from .augment import AugmentSpec, apply_augment
from .estimator import TopoContrastiveEmbedder, check_graphs
from .expert import iso_similarity, structural_matrix
from .graph import DatasetBundle, Graph, IngestionError, load_tudataset, save_tudataset
from .pipeline import TrainConfig, embed_dataset, linear_probe_cv, train
from .probe import LogisticProbe

__all__ = [
    "AugmentSpec",
    "DatasetBundle",
    "Graph",
    "IngestionError",
    "LogisticProbe",
    "TopoContrastiveEmbedder",
    "TrainConfig",
    "apply_augment",
    "check_graphs",
    "embed_dataset",
    "iso_similarity",
    "linear_probe_cv",
    "load_tudataset",
    "save_tudataset",
    "structural_matrix",
    "train",
]
