"""In-memory placement dataset: encoded graphs, image planes and labelled samples.

Every background is resized to the square working frame ``S x S``. Placement
parameters are unchanged by a per-axis rescale of the whole frame, so ``t``
values and scene graphs stay in the original pixel frame while composition
happens at ``S x S``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .augment import CompositeSample
from .composer import fitted_size
from .model import EncodedGraph, Vocabulary, collate_graphs, encode_graph
from .scene_graph import BoundingBox, SceneGraph, parse_scene_graph


@dataclass
class Scene:
    graph: SceneGraph
    encoded: EncodedGraph
    fg_category: str
    fg_size: tuple[float, float]
    bg: torch.Tensor  # uint8 3 x S x S
    fg_key: tuple


@dataclass
class Sample:
    scene: int
    t: tuple[float, float, float]
    label: int
    bbox: BoundingBox | None = None


def _resize_u8(img: np.ndarray, size: int) -> torch.Tensor:
    """``H x W (x C)`` uint8 -> ``C x size x size`` uint8."""
    t = torch.from_numpy(np.array(img))
    if t.dim() == 2:
        t = t[None]
    else:
        t = t.permute(2, 0, 1)
    if t.shape[1:] == (size, size):
        return t.contiguous()
    out = F.interpolate(t[None].float(), size=(size, size), mode="bilinear", align_corners=False, antialias=True)[0]
    return out.round().clamp(0, 255).to(torch.uint8)


def foreground_planes(fg_img: np.ndarray, fg_mask: np.ndarray, frame: tuple[int, int], size: int):
    """Fit the foreground into a ``frame`` (W, H) canvas, centered, then resize to ``size``.

    Returns ``(fg uint8 3xSxS, mask uint8 1xSxS, fitted dims in S-frame pixels)``.
    """
    W, H = frame
    h_f, w_f = fg_mask.shape[:2]
    bw, bh = fitted_size((w_f, h_f), (W, H))
    # draw directly at S resolution: the fitted box spans bw*S/W by bh*S/H pixels
    sw, sh = bw * size / W, bh * size / H
    pw, ph = max(1, int(round(sw))), max(1, int(round(sh)))
    img = torch.from_numpy(np.array(fg_img)).permute(2, 0, 1)[None].float()
    msk = torch.from_numpy(np.array(fg_mask))[None, None].float()
    img = F.interpolate(img, size=(ph, pw), mode="bilinear", align_corners=False, antialias=True)[0]
    msk = F.interpolate(msk, size=(ph, pw), mode="bilinear", align_corners=False, antialias=True)[0]
    fg = torch.zeros(3, size, size)
    mask = torch.zeros(1, size, size)
    ox, oy = (size - pw) // 2, (size - ph) // 2
    fg[:, oy:oy + ph, ox:ox + pw] = img
    mask[:, oy:oy + ph, ox:ox + pw] = msk
    to_u8 = lambda t: t.round().clamp(0, 255).to(torch.uint8)  # noqa: E731
    return to_u8(fg), to_u8(mask), (float(pw), float(ph))


class PlacementDataset:
    def __init__(self, image_size: int = 128, node_budget: int = 20):
        self.size = image_size
        self.node_budget = node_budget
        self.scenes: list[Scene] = []
        self.samples: list[Sample] = []
        self.foregrounds: dict[tuple, tuple[torch.Tensor, torch.Tensor, tuple[float, float]]] = {}

    # construction -----------------------------------------------------------
    def add_scene(self, graph: SceneGraph, fg_category: str, fg_size, bg_img: np.ndarray,
                  fg_img: np.ndarray, fg_mask: np.ndarray, fg_name: str | None = None) -> int:
        frame = (graph.bg_width, graph.bg_height)
        key = (fg_name or fg_category, tuple(fg_size), frame)
        if key not in self.foregrounds:
            self.foregrounds[key] = foreground_planes(fg_img, fg_mask, frame, self.size)
        self.scenes.append(Scene(graph, encode_graph(graph, self.node_budget), fg_category,
                                 tuple(float(v) for v in fg_size), _resize_u8(bg_img, self.size), key))
        return len(self.scenes) - 1

    def add_sample(self, scene: int, t, label: int, bbox=None) -> int:
        self.samples.append(Sample(scene, tuple(float(v) for v in t), int(label), bbox))
        return len(self.samples) - 1

    @classmethod
    def from_toy(cls, toy, image_size: int = 128, node_budget: int = 20) -> "PlacementDataset":
        from .synthetic import render_background, render_foreground

        ds = cls(image_size, node_budget)
        fg_cache = {}
        for scene in toy.scenes:
            key = (scene.fg_category, tuple(scene.fg_size))
            if key not in fg_cache:
                fg_cache[key] = render_foreground(*key)
            img, mask = fg_cache[key]
            ds.add_scene(scene.graph, scene.fg_category, scene.fg_size, render_background(scene), img, mask)
        for s in toy.samples:
            ds.add_sample(s.scene, s.t, s.label, s.bbox)
        return ds

    @classmethod
    def from_directory(cls, root, image_size: int = 128, node_budget: int = 20) -> "PlacementDataset":
        """Load a directory holding ``manifest.ndjson`` plus the files it references."""
        from PIL import Image

        root = Path(root)
        ds = cls(image_size, node_budget)
        scene_ids: dict = {}
        images: dict[str, np.ndarray] = {}

        def image(rel: str, mode: str) -> np.ndarray:
            if rel not in images:
                with Image.open(root / rel) as im:
                    images[rel] = np.asarray(im.convert(mode))
            return images[rel]

        manifest = root / "manifest.ndjson"
        if not manifest.exists():
            raise FileNotFoundError(f"{manifest} not found")
        for line in manifest.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            r = json.loads(line)
            key = r.get("scene", r["graph"])
            if key not in scene_ids:
                graph = parse_scene_graph((root / r["graph"]).read_text(encoding="utf-8"))
                scene_ids[key] = ds.add_scene(graph, r["fg_category"], r["fg_size"], image(r["bg"], "RGB"),
                                              image(r["fg"], "RGB"), image(r["mask"], "L"), r["fg"])
                images.pop(r["bg"], None)
            bbox = BoundingBox(*r["bbox"]) if "bbox" in r else None
            ds.add_sample(scene_ids[key], r["t"], r["label"], bbox)
        return ds

    # access -----------------------------------------------------------------
    @property
    def real_ids(self) -> list[int]:
        return [i for i, s in enumerate(self.samples) if s.label == 1]

    @property
    def fake_ids(self) -> list[int]:
        return [i for i, s in enumerate(self.samples) if s.label == 0]

    def vocabularies(self) -> tuple[Vocabulary, Vocabulary]:
        objects, relations = set(), set()
        for sc in self.scenes:
            objects.update(n.label for n in sc.graph.nodes)
            objects.add(sc.fg_category)
            relations.update(e.relation_label for e in sc.graph.edges)
        return Vocabulary(sorted(objects)), Vocabulary(sorted(relations))

    def composite_sample(self, i: int) -> CompositeSample:
        s = self.samples[i]
        return self.scene_sample(s.scene, s.t, s.label)

    def scene_sample(self, scene: int, t=(0.5, 0.5, 0.5), label: int = 1) -> CompositeSample:
        sc = self.scenes[scene]
        fg, mask, dims = self.foregrounds[sc.fg_key]
        return CompositeSample(
            sc.bg.float() / 255, fg.float() / 255, mask.float() / 255,
            torch.tensor(t, dtype=torch.float32), torch.tensor(dims, dtype=torch.float32), label,
        )

    def graph_batch(self, scene_ids, objects: Vocabulary, relations: Vocabulary) -> dict:
        return collate_graphs([self.scenes[i].encoded for i in scene_ids], objects, relations)


def stack_samples(samples: list[CompositeSample]) -> dict[str, torch.Tensor]:
    return {
        "bg": torch.stack([s.bg for s in samples]),
        "fg": torch.stack([s.fg for s in samples]),
        "mask": torch.stack([s.mask for s in samples]),
        "t": torch.stack([s.t for s in samples]),
        "fg_dims": torch.stack([s.fg_dims for s in samples]),
    }
