"""Probe families: surface classifiers, edge probing, structural probes."""

from .classifier import (
    ClassifierProbe,
    ProbeDataset,
    TrainConfig,
    eval_classifier,
    shuffle_labels,
    split_dataset,
    train_classifier,
)
from .edge import build_edge_features
from .structural import (
    DEPTH,
    DISTANCE,
    StructuralProbeModel,
    StructuralTrainConfig,
    depth_loss_and_grad,
    distance_loss_and_grad,
    eval_depth_probe,
    eval_distance_probe,
    gradient_check,
    prim_mst,
    train_depth_probe,
    train_distance_probe,
)
from .store import load_probe, save_probe
from .surface import (
    LENGTH_BIN_EDGES,
    LENGTH_BIN_NAMES,
    build_content_task,
    build_length_task,
    build_order_task,
    length_bin,
)

__all__ = [
    "ClassifierProbe",
    "ProbeDataset",
    "TrainConfig",
    "eval_classifier",
    "shuffle_labels",
    "split_dataset",
    "train_classifier",
    "build_edge_features",
    "DEPTH",
    "DISTANCE",
    "StructuralProbeModel",
    "StructuralTrainConfig",
    "depth_loss_and_grad",
    "distance_loss_and_grad",
    "eval_depth_probe",
    "eval_distance_probe",
    "gradient_check",
    "prim_mst",
    "train_depth_probe",
    "train_distance_probe",
    "load_probe",
    "save_probe",
    "LENGTH_BIN_EDGES",
    "LENGTH_BIN_NAMES",
    "build_content_task",
    "build_length_task",
    "build_order_task",
    "length_bin",
]
