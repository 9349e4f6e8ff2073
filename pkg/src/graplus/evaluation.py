"""Spatial-precision metrics for predicted placements."""

from __future__ import annotations

import json
import math
import subprocess
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence

from .composer import PlacementParams
from .scene_graph import BoundingBox

IOU_THRESHOLD = 0.5
CENTER_THRESHOLD_PX = 50.0
SCALE_THRESHOLD = 0.8


def params_to_bbox(t, fg_dims, bg_dims, return_flag: bool = False):
    """Pixel box for placement ``t`` of a ``fg_dims`` object in a ``bg_dims`` frame.

    Inverse of :func:`graplus.spatial.placement_from_box`. Boxes larger than the
    frame are shrunk to fit (aspect kept) and flagged.
    """
    t_r, t_x, t_y = t.as_tuple() if isinstance(t, PlacementParams) else t
    w_f, h_f = fg_dims
    W, H = bg_dims
    ar_fg = w_f / h_f
    if ar_fg < W / H:
        h = t_r * H
        w = h * ar_fg
    else:
        w = t_r * W
        h = w / ar_fg
    clamped = False
    if w > W or h > H:
        s = min(W / w, H / h)
        w, h, clamped = w * s, h * s, True
    box = BoundingBox(t_x * (W - w), t_y * (H - h), w, h)
    return (box, clamped) if return_flag else box


def _box(b) -> BoundingBox:
    return b if isinstance(b, BoundingBox) else BoundingBox(*b)


def iou(a, b) -> float:
    a, b = _box(a), _box(b)
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def center_distance(a, b) -> float:
    (ax, ay), (bx, by) = _box(a).center, _box(b).center
    return math.hypot(ax - bx, ay - by)


def scale_ratio(a, b) -> float:
    a_area, b_area = _box(a).area, _box(b).area
    return min(a_area, b_area) / max(a_area, b_area)


@dataclass
class MetricsReport:
    mean_iou: float
    iou_ge_50: float
    mean_center_dist: float
    center_le_50px: float
    mean_scale_ratio: float
    scale_ge_80: float
    n_samples: int
    accuracy: Optional[float] = None

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.accuracy is None:
            del d["accuracy"]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def evaluate_run(predictions: Sequence, ground_truth: Sequence, classifier: Optional[Callable] = None,
                 composites: Optional[Sequence] = None) -> MetricsReport:
    """Aggregate box metrics over ``(t, fg_dims, bg_dims)`` predictions.

    ``classifier`` is called once per entry of ``composites`` (typically PNG paths)
    and returns truthy for a plausible composite; without it ``accuracy`` is left
    unset.
    """
    if len(predictions) != len(ground_truth):
        raise ValueError(f"{len(predictions)} predictions vs {len(ground_truth)} ground-truth boxes")
    n = len(predictions)
    if n == 0:
        raise ValueError("no samples to evaluate")
    ious, dists, scales = [], [], []
    for (t, fg, bg), gt in zip(predictions, ground_truth):
        box = params_to_bbox(t, fg, bg)
        ious.append(iou(box, gt))
        dists.append(center_distance(box, gt))
        scales.append(scale_ratio(box, gt))
    accuracy = None
    if classifier is not None:
        if composites is None or len(composites) != n:
            raise ValueError("classifier scoring needs one composite per prediction")
        accuracy = sum(bool(classifier(c)) for c in composites) / n
    return MetricsReport(
        mean_iou=sum(ious) / n,
        iou_ge_50=sum(v > IOU_THRESHOLD for v in ious) / n,
        mean_center_dist=sum(dists) / n,
        center_le_50px=sum(v <= CENTER_THRESHOLD_PX for v in dists) / n,
        mean_scale_ratio=sum(scales) / n,
        scale_ge_80=sum(v > SCALE_THRESHOLD for v in scales) / n,
        n_samples=n,
        accuracy=accuracy,
    )


def command_classifier(command: Sequence[str]) -> Callable[[str], bool]:
    """Wrap an external plausibility scorer.

    The command receives the composite PNG path as its last argument and must
    print ``1`` (plausible) or ``0`` on stdout.
    """
    def score(png_path) -> bool:
        out = subprocess.run([*command, str(png_path)], capture_output=True, text=True, check=True)
        verdict = out.stdout.strip()
        if verdict not in ("0", "1"):
            raise ValueError(f"classifier printed {verdict!r}, expected '0' or '1'")
        return verdict == "1"
    return score


def read_ndjson(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def load_predictions(path) -> list[tuple]:
    return [(tuple(r["t"]), tuple(r["fg"]), tuple(r["bg"])) for r in read_ndjson(path)]


def load_ground_truth(path) -> list[BoundingBox]:
    return [BoundingBox(*r["bbox"]) for r in read_ndjson(path)]
