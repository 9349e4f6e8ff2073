"""Scene-graph conditioned object placement.

A graph transformer encodes the background's scene graph, cross-attention picks
out the context relevant to the foreground category, and a regressor predicts
``(t_r, t_x, t_y)`` which an affine warp turns into a composite. Training is
adversarial with a scale-gated reconstruction term.
"""

from .composer import PlacementParams, compose
from .config import ModelConfig, RunConfig, TrainConfig, load_config
from .evaluation import MetricsReport, center_distance, evaluate_run, iou, params_to_bbox, scale_ratio
from .model import PlacementGenerator
from .scene_graph import BoundingBox, SceneEdge, SceneGraph, SceneNode, parse_scene_graph
from .spatial import spatial_vector
from .trainer import Trainer

__version__ = "0.1.0"

__all__ = [
    "BoundingBox", "MetricsReport", "ModelConfig", "PlacementGenerator", "PlacementParams", "RunConfig",
    "SceneEdge", "SceneGraph", "SceneNode", "TrainConfig", "Trainer", "center_distance", "compose",
    "evaluate_run", "iou", "load_config", "params_to_bbox", "parse_scene_graph", "scale_ratio", "spatial_vector",
]
