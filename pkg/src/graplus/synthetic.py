"""Deterministic toy placement scenes with an analytic oracle.

Each scene is a flat-colored background holding one anchor object (e.g. a
table) and some distractors. The foreground (e.g. a cup) has exactly one
plausible placement given by its rule: centered horizontally on the anchor,
bottom edge on the anchor's top edge, height a fixed fraction of the anchor's.
Negatives reuse the same scene with the foreground either moved off the anchor
or scaled by a large factor.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .evaluation import iou, params_to_bbox, scale_ratio
from .scene_graph import (BoundingBox, SceneEdge, SceneGraph, SceneNode, parse_scene_graph,
                          serialize_scene_graph)
from .spatial import placement_from_box

OBJECT_VOCAB = ("table", "cup", "chair", "lamp", "plant", "bottle", "book", "sofa", "shelf", "vase")
RELATION_VOCAB = ("left of", "right of", "above", "below", "near")

CATEGORY_COLORS = {
    "table": (139, 90, 43), "cup": (220, 40, 40), "chair": (40, 120, 200), "lamp": (240, 220, 60),
    "plant": (40, 160, 60), "bottle": (120, 200, 200), "book": (150, 60, 160), "sofa": (90, 90, 120),
    "shelf": (200, 140, 90), "vase": (240, 150, 200),
}


class ToySpecError(ValueError):
    pass


class OracleError(LookupError):
    pass


@dataclass(frozen=True)
class PlacementRule:
    foreground: str = "cup"
    anchor: str = "table"
    scale: float = 0.25
    fg_size: tuple[int, int] = (48, 64)


@dataclass(frozen=True)
class ToySceneSpec:
    canvas: tuple[int, int] = (256, 256)
    rules: tuple[PlacementRule, ...] = (PlacementRule(),)
    distractors: int = 3
    distractor_categories: tuple[str, ...] = ("chair", "lamp", "plant", "bottle", "book")
    anchor_width: tuple[float, float] = (0.3, 0.6)
    anchor_height: tuple[float, float] = (0.2, 0.35)
    fake_ratio: int = 2
    seed: int = 0

    def validate(self) -> "ToySceneSpec":
        fgs = [r.foreground for r in self.rules]
        if not fgs:
            raise ToySpecError("at least one placement rule is required")
        if len(set(fgs)) != len(fgs):
            raise ToySpecError("every foreground category needs exactly one rule")
        for r in self.rules:
            for lb in (r.foreground, r.anchor):
                if lb not in OBJECT_VOCAB:
                    raise ToySpecError(f"unknown category {lb!r}")
            if not 0 < r.scale <= 1:
                raise ToySpecError(f"rule scale {r.scale} outside (0, 1]")
            # tallest anchor placed as high as allowed must still leave room for the foreground
            if self.anchor_height[1] * (1 + r.scale) > 0.95:
                raise ToySpecError(f"rule for {r.foreground!r} cannot fit above a tall anchor")
        for lb in self.distractor_categories:
            if lb not in OBJECT_VOCAB:
                raise ToySpecError(f"unknown distractor category {lb!r}")
        if self.fake_ratio < 0 or self.distractors < 0:
            raise ToySpecError("fake_ratio and distractors must be >= 0")
        return self

    def rule_for(self, foreground: str) -> PlacementRule:
        for r in self.rules:
            if r.foreground == foreground:
                return r
        raise ToySpecError(f"no rule for foreground {foreground!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ToySceneSpec":
        doc = dict(doc)
        if "rules" in doc:
            doc["rules"] = tuple(PlacementRule(**{**r, "fg_size": tuple(r.get("fg_size", (48, 64)))})
                                 for r in doc["rules"])
        for key in ("canvas", "distractor_categories", "anchor_width", "anchor_height"):
            if key in doc:
                doc[key] = tuple(doc[key])
        unknown = set(doc) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ToySpecError(f"unknown spec keys: {sorted(unknown)}")
        return cls(**doc).validate()


@dataclass
class ToyScene:
    graph: SceneGraph
    fg_category: str
    fg_size: tuple[int, int]
    t_gt: tuple[float, float, float]
    rule_box: BoundingBox


@dataclass
class ToySample:
    scene: int
    t: tuple[float, float, float]
    label: int
    bbox: BoundingBox
    kind: str = "positive"


@dataclass
class ToyDataset:
    spec: ToySceneSpec
    scenes: list[ToyScene] = field(default_factory=list)
    samples: list[ToySample] = field(default_factory=list)

    @property
    def real_ids(self) -> list[int]:
        return [i for i, s in enumerate(self.samples) if s.label == 1]

    @property
    def fake_ids(self) -> list[int]:
        return [i for i, s in enumerate(self.samples) if s.label == 0]


def desk_study_spec(seed: int = 0) -> ToySceneSpec:
    """One "cup on table" rule at full anchor height plus 3 distractors.

    The larger scale keeps target boxes 50-90 px tall so that IoU reflects
    placement rather than single-pixel rounding.
    """
    return ToySceneSpec(rules=(PlacementRule(scale=1.0),), distractors=3, seed=seed)


def rule_box(anchor: BoundingBox, rule: PlacementRule) -> BoundingBox:
    h = rule.scale * anchor.h
    w = h * rule.fg_size[0] / rule.fg_size[1]
    return BoundingBox(anchor.x + anchor.w / 2 - w / 2, anchor.y - h, w, h)


def _relation(a: BoundingBox, b: BoundingBox) -> tuple[int, str]:
    (ax, ay), (bx, by) = a.center, b.center
    if abs(ax - bx) >= abs(ay - by):
        label = "left of" if ax < bx else "right of"
    else:
        label = "above" if ay < by else "below"
    return RELATION_VOCAB.index(label), label


def build_graph(nodes: list[SceneNode], width: int, height: int) -> SceneGraph:
    edges = []
    for i, a in enumerate(nodes):
        for j, b in enumerate(nodes):
            if i != j:
                rid, rlabel = _relation(a.box, b.box)
                edges.append(SceneEdge(i, j, rid, rlabel))
    return SceneGraph(tuple(nodes), tuple(edges), width, height, complete=True)


def oracle_placement(scene: SceneGraph, fg_category: str, spec: ToySceneSpec) -> tuple[float, float, float]:
    """Placement implied by the rule for ``fg_category``.

    With several anchors of the rule's category the leftmost (then topmost) wins.
    """
    rule = spec.rule_for(fg_category)
    anchors = [n.box for n in scene.nodes if n.label == rule.anchor]
    if not anchors:
        raise OracleError(f"scene has no {rule.anchor!r} to place {fg_category!r} on")
    anchor = min(anchors, key=lambda b: (b.x, b.y))
    box = rule_box(anchor, rule)
    if box.x < 0 or box.y < 0 or box.x + box.w > scene.bg_width or box.y + box.h > scene.bg_height:
        raise ToySpecError(f"rule box {box} leaves the {scene.bg_width}x{scene.bg_height} canvas")
    t, _ = placement_from_box(box, scene.bg_width, scene.bg_height)
    return t


def _cents(v: float) -> float:
    """Round down to 1/100 pixel so stored boxes never poke past the canvas."""
    return float(np.floor(v * 100) / 100)


def _random_scene(spec: ToySceneSpec, rule: PlacementRule, rng: np.random.Generator) -> ToyScene:
    W, H = spec.canvas
    aw = _cents(rng.uniform(*spec.anchor_width) * W)
    ah = _cents(rng.uniform(*spec.anchor_height) * H)
    ax = _cents(rng.uniform(0, W - aw))
    # leave room above the anchor for the foreground
    ay = _cents(rng.uniform(ah * rule.scale + 0.02 * H, H - ah))
    anchor = BoundingBox(ax, ay, aw, ah)
    nodes = [SceneNode(OBJECT_VOCAB.index(rule.anchor), rule.anchor, anchor, round(float(rng.uniform(0.5, 1.0)), 4))]
    for _ in range(spec.distractors):
        cat = spec.distractor_categories[rng.integers(len(spec.distractor_categories))]
        dw, dh = _cents(rng.uniform(0.08, 0.25) * W), _cents(rng.uniform(0.08, 0.3) * H)
        box = BoundingBox(_cents(rng.uniform(0, W - dw)), _cents(rng.uniform(0, H - dh)), dw, dh)
        nodes.append(SceneNode(OBJECT_VOCAB.index(cat), cat, box, round(float(rng.uniform(0.3, 1.0)), 4)))
    order = rng.permutation(len(nodes))
    nodes = [nodes[i] for i in order]
    graph = build_graph(nodes, W, H)
    target = rule_box(anchor, rule)
    return ToyScene(graph, rule.foreground, rule.fg_size, oracle_placement(graph, rule.foreground, spec), target)


def _negative(scene: ToyScene, spec: ToySceneSpec, k: int, rng: np.random.Generator) -> ToySample:
    W, H = spec.canvas
    target = scene.rule_box
    anchor = min((n.box for n in scene.graph.nodes if n.label == spec.rule_for(scene.fg_category).anchor),
                 key=lambda b: (b.x, b.y))
    for _ in range(1000):
        if k % 2 == 0:
            # misplaced: same size, away from the anchor
            w, h = target.w, target.h
            box = BoundingBox(rng.uniform(0, W - w), rng.uniform(0, H - h), w, h)
            if iou(box, anchor) == 0 and iou(box, target) < 0.2:
                kind = "misplaced"
                break
        else:
            # wrong scale, same anchor-relative position
            f = 3.5 if rng.random() < 0.5 else 1 / 3.5
            h = min(target.h * f, 0.9 * H, (target.y + target.h))
            w = h * scene.fg_size[0] / scene.fg_size[1]
            if w > 0.9 * W:
                w = 0.9 * W
                h = w * scene.fg_size[1] / scene.fg_size[0]
            cx = min(max(target.x + target.w / 2, w / 2), W - w / 2)
            box = BoundingBox(cx - w / 2, target.y + target.h - h, w, h)
            if scale_ratio(box, target) < 0.33 and box.y >= 0:
                kind = "rescaled"
                break
    else:
        raise ToySpecError("could not draw an implausible placement")
    t, _ = placement_from_box(box, W, H)
    return ToySample(-1, t, 0, params_to_bbox(t, scene.fg_size, (W, H)), kind)


def generate_toy_dataset(spec: ToySceneSpec, n_samples: int, fake_ratio: int | None = None) -> ToyDataset:
    """``n_samples`` positive scenes plus ``fake_ratio`` negatives per scene."""
    spec.validate()
    ratio = spec.fake_ratio if fake_ratio is None else fake_ratio
    rng = np.random.default_rng(spec.seed)
    data = ToyDataset(spec)
    for s in range(n_samples):
        rule = spec.rules[s % len(spec.rules)]
        scene = _random_scene(spec, rule, rng)
        data.scenes.append(scene)
        data.samples.append(ToySample(s, scene.t_gt, 1, scene.rule_box))
        for k in range(ratio):
            neg = _negative(scene, spec, k, rng)
            neg.scene = s
            data.samples.append(neg)
    return data


# rendering ------------------------------------------------------------------

def render_background(scene: ToyScene) -> np.ndarray:
    """``H x W x 3`` uint8 image: light floor color plus one filled rectangle per node."""
    g = scene.graph
    img = np.empty((g.bg_height, g.bg_width, 3), dtype=np.uint8)
    img[:] = (235, 232, 225)
    # draw larger boxes first so small ones stay visible
    for node in sorted(g.nodes, key=lambda n: -n.box.area):
        b = node.box
        x0, y0 = int(round(b.x)), int(round(b.y))
        x1, y1 = int(round(b.x + b.w)), int(round(b.y + b.h))
        img[y0:y1, x0:x1] = CATEGORY_COLORS.get(node.label, (128, 128, 128))
    return img


def render_foreground(category: str, size: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Native-size foreground image and mask (a rounded body with a darker band)."""
    w, h = size
    color = np.array(CATEGORY_COLORS.get(category, (128, 128, 128)), dtype=np.float64)
    ys, xs = np.mgrid[0:h, 0:w]
    u = (xs + 0.5) / w * 2 - 1
    v = (ys + 0.5) / h * 2 - 1
    mask = ((np.abs(u) ** 4 + np.abs(v) ** 4) <= 1.0).astype(np.uint8) * 255
    img = np.tile(color, (h, w, 1))
    img[(v > -0.2) & (v < 0.1)] *= 0.6
    return img.astype(np.uint8), mask


def write_dataset(data: ToyDataset, out_dir) -> Path:
    """Write graphs, PNG planes and ``manifest.ndjson`` under ``out_dir``."""
    from PIL import Image

    out = Path(out_dir)
    (out / "graphs").mkdir(parents=True, exist_ok=True)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "spec.json").write_text(json.dumps(data.spec.to_dict(), indent=1, sort_keys=True), encoding="utf-8")
    fg_written = set()
    for s, scene in enumerate(data.scenes):
        (out / "graphs" / f"scene_{s:05d}.json").write_text(serialize_scene_graph(scene.graph), encoding="utf-8")
        Image.fromarray(render_background(scene)).save(out / "images" / f"bg_{s:05d}.png")
        key = (scene.fg_category, tuple(scene.fg_size))
        if key not in fg_written:
            img, mask = render_foreground(*key)
            Image.fromarray(img).save(out / "images" / f"fg_{scene.fg_category}.png")
            Image.fromarray(mask).save(out / "images" / f"mask_{scene.fg_category}.png")
            fg_written.add(key)
    lines = []
    for i, smp in enumerate(data.samples):
        scene = data.scenes[smp.scene]
        lines.append(json.dumps({
            "id": i, "scene": smp.scene, "label": smp.label, "kind": smp.kind,
            "graph": f"graphs/scene_{smp.scene:05d}.json", "bg": f"images/bg_{smp.scene:05d}.png",
            "fg_category": scene.fg_category, "fg": f"images/fg_{scene.fg_category}.png",
            "mask": f"images/mask_{scene.fg_category}.png", "fg_size": list(scene.fg_size),
            "t": list(smp.t), "bbox": smp.bbox.as_list(),
        }, sort_keys=True))
    (out / "manifest.ndjson").write_text("\n".join(lines) + "\n", encoding="utf-8")
    gt = [json.dumps({"scene": s, "bbox": sc.rule_box.as_list()}) for s, sc in enumerate(data.scenes)]
    (out / "gt.ndjson").write_text("\n".join(gt) + "\n", encoding="utf-8")
    return out


def read_dataset(root) -> ToyDataset:
    """Inverse of :func:`write_dataset` (images are re-read lazily by the trainer)."""
    root = Path(root)
    spec = ToySceneSpec.from_dict(json.loads((root / "spec.json").read_text(encoding="utf-8")))
    data = ToyDataset(spec)
    scene_index: dict[int, int] = {}
    for line in (root / "manifest.ndjson").read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        r = json.loads(line)
        if r["scene"] not in scene_index:
            graph = parse_scene_graph((root / r["graph"]).read_text(encoding="utf-8"))
            positive = r if r["label"] == 1 else None
            scene_index[r["scene"]] = len(data.scenes)
            data.scenes.append(ToyScene(graph, r["fg_category"], tuple(r["fg_size"]),
                                        tuple(r["t"]) if positive else None,
                                        BoundingBox(*r["bbox"]) if positive else None))
        sc = data.scenes[scene_index[r["scene"]]]
        if r["label"] == 1 and sc.t_gt is None:
            sc.t_gt, sc.rule_box = tuple(r["t"]), BoundingBox(*r["bbox"])
        data.samples.append(ToySample(scene_index[r["scene"]], tuple(r["t"]), r["label"],
                                      BoundingBox(*r["bbox"]), r.get("kind", "")))
    return data


__all__ = [
    "OBJECT_VOCAB", "RELATION_VOCAB", "PlacementRule", "ToySceneSpec", "ToyScene", "ToySample", "ToyDataset",
    "rule_box", "oracle_placement", "generate_toy_dataset", "render_background", "render_foreground",
    "write_dataset", "read_dataset",
]
