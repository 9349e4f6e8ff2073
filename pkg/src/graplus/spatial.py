"""Per-node geometric features and their fusion with graph features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .scene_graph import BoundingBox

T_MIN = 1e-4
T_MAX = 1.0 - 1e-4
SPATIAL_DIM = 9


@dataclass(frozen=True)
class SpatialVector:
    bg_width: float
    bg_height: float
    x: float
    y: float
    w: float
    h: float
    t_r: float
    t_x: float
    t_y: float
    clamped: bool = False

    def as_array(self) -> np.ndarray:
        return np.array([self.bg_width, self.bg_height, self.x, self.y, self.w, self.h,
                         self.t_r, self.t_x, self.t_y], dtype=np.float64)

    @property
    def t(self) -> tuple[float, float, float]:
        return (self.t_r, self.t_x, self.t_y)


def _clip(v: float) -> tuple[float, bool]:
    c = min(max(v, T_MIN), T_MAX)
    return c, c != v


def placement_from_box(box: BoundingBox, bg_width: float, bg_height: float) -> tuple[tuple[float, float, float], bool]:
    """Scale/translation parameters of ``box`` inside a ``bg_width x bg_height`` frame.

    Scale is relative to the height when the box is narrower (in aspect) than the
    background, else to the width; a tie uses the width. Translation denominators
    are floored at one pixel and every output is clipped to ``[T_MIN, T_MAX]``.
    Returns ``(t, clamped)``.
    """
    ar_obj = box.w / box.h
    ar_bg = bg_width / bg_height
    t_r = box.h / bg_height if ar_obj < ar_bg else box.w / bg_width
    slack_x = bg_width - box.w
    slack_y = bg_height - box.h
    flagged = slack_x < 1 or slack_y < 1
    t_x = box.x / max(slack_x, 1.0)
    t_y = box.y / max(slack_y, 1.0)
    out = []
    for v in (t_r, t_x, t_y):
        c, hit = _clip(v)
        out.append(c)
        flagged |= hit
    return tuple(out), flagged


def spatial_vector(box: BoundingBox, bg: tuple[float, float]) -> SpatialVector:
    W, H = bg
    (t_r, t_x, t_y), flagged = placement_from_box(box, W, H)
    return SpatialVector(float(W), float(H), box.x, box.y, box.w, box.h, t_r, t_x, t_y, flagged)


class SpatialProjection(nn.Module):
    """Linear map from the 9 raw geometric features to ``d_spatial``.

    Pixel-valued entries are divided by ``pixel_scale`` first so the linear layer
    sees O(1) inputs; ``pixel_scale=1`` feeds raw pixels.
    """

    def __init__(self, d_spatial: int = 256, pixel_scale: float = 256.0):
        super().__init__()
        self.proj = nn.Linear(SPATIAL_DIM, d_spatial)
        scale = torch.ones(SPATIAL_DIM)
        scale[:6] = pixel_scale
        self.register_buffer("scale", scale, persistent=False)

    def forward(self, s: torch.Tensor) -> torch.Tensor:
        return self.proj(s / self.scale)


def enhance(x_graph: torch.Tensor, spatial: torch.Tensor, proj: SpatialProjection) -> torch.Tensor:
    """Concatenate graph features with projected spatial features along the last axis."""
    if x_graph.shape[:-1] != spatial.shape[:-1]:
        raise ValueError(f"row mismatch: graph features {tuple(x_graph.shape)} vs spatial {tuple(spatial.shape)}")
    return torch.cat([x_graph, proj(spatial)], dim=-1)
