"""Heterogeneous graph crossmodal network for two-modality clip classification."""

from .autodiff import Tape, Tensor, backward
from .data import ClipRecord, SynthConfig, generate_synthetic, read_container, write_container
from .errors import FormatError, ShapeError
from .graph import EdgeSet, HeteroGraph, SubgraphSpec, assemble_graph, build_intra_edges
from .metrics import Metrics, average_precision, roc_auc
from .model import (HgcnModel, MatchingConfig, ModelConfig, forward, gat_fuse, init_xavier,
                    knn_matching, load_checkpoint, sage_forward, save_checkpoint)
from .training import TrainConfig, loss, sgd_step, train

__version__ = "0.1.0"

__all__ = [
    "ClipRecord", "EdgeSet", "FormatError", "HeteroGraph", "HgcnModel", "MatchingConfig",
    "Metrics", "ModelConfig", "ShapeError", "SubgraphSpec", "SynthConfig", "Tape", "Tensor",
    "TrainConfig", "assemble_graph", "average_precision", "backward", "build_intra_edges",
    "forward", "gat_fuse", "generate_synthetic", "init_xavier", "knn_matching",
    "load_checkpoint", "loss", "read_container", "roc_auc", "sage_forward",
    "save_checkpoint", "sgd_step", "train", "write_container",
]
