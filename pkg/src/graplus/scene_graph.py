"""Scene-graph domain types, JSON ingestion and node-budget truncation.

Boxes use the top-left convention: ``(x, y)`` is the upper-left corner in
pixels, ``w``/``h`` the extent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np

NUM_OBJECT_CATEGORIES = 151
NUM_RELATION_TYPES = 51


class SceneGraphError(ValueError):
    pass


class ParseError(SceneGraphError):
    """Malformed document. ``where`` names the line or the offending field."""

    def __init__(self, message: str, where: str):
        super().__init__(f"{where}: {message}")
        self.where = where


class ValidationError(SceneGraphError):
    """Well-formed document whose contents break one or more invariants."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2, self.y + self.h / 2)

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]

    def violations(self, bg_width: float, bg_height: float, name: str = "box") -> list[str]:
        out = []
        vals = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            return [f"{name}: non-finite coordinate {list(vals)}"]
        if self.w <= 0:
            out.append(f"{name}: w={self.w} must be > 0")
        if self.h <= 0:
            out.append(f"{name}: h={self.h} must be > 0")
        if self.x < 0:
            out.append(f"{name}: x={self.x} must be >= 0")
        if self.y < 0:
            out.append(f"{name}: y={self.y} must be >= 0")
        if self.x + self.w > bg_width:
            out.append(f"{name}: x+w={self.x + self.w} exceeds width {bg_width}")
        if self.y + self.h > bg_height:
            out.append(f"{name}: y+h={self.y + self.h} exceeds height {bg_height}")
        return out


@dataclass(frozen=True)
class SceneNode:
    category_id: int
    label: str
    box: BoundingBox
    confidence: float = 1.0


@dataclass(frozen=True)
class SceneEdge:
    src: int
    dst: int
    relation_id: int
    relation_label: str


@dataclass(frozen=True)
class SceneGraph:
    nodes: tuple[SceneNode, ...]
    edges: tuple[SceneEdge, ...]
    bg_width: int
    bg_height: int
    complete: bool = False
    num_object_categories: int = field(default=NUM_OBJECT_CATEGORIES, compare=False, repr=False)
    num_relation_types: int = field(default=NUM_RELATION_TYPES, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        problems = self.violations()
        if problems:
            raise ValidationError(problems)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def violations(self) -> list[str]:
        out = []
        if self.bg_width <= 0 or self.bg_height <= 0:
            out.append(f"background {self.bg_width}x{self.bg_height} must be positive")
        n = len(self.nodes)
        for i, node in enumerate(self.nodes):
            if not 0 <= node.category_id < self.num_object_categories:
                out.append(f"nodes[{i}].category_id={node.category_id} outside [0, {self.num_object_categories})")
            if not node.label:
                out.append(f"nodes[{i}].label is empty")
            if not 0.0 <= node.confidence <= 1.0:
                out.append(f"nodes[{i}].confidence={node.confidence} outside [0, 1]")
            out.extend(node.box.violations(self.bg_width, self.bg_height, f"nodes[{i}].box"))
        seen = set()
        for k, e in enumerate(self.edges):
            if not (0 <= e.src < n and 0 <= e.dst < n):
                out.append(f"edges[{k}] references node ({e.src}, {e.dst}) outside [0, {n})")
            if e.src == e.dst:
                out.append(f"edges[{k}] is a self-loop on node {e.src}")
            if not 0 <= e.relation_id < self.num_relation_types:
                out.append(f"edges[{k}].relation_id={e.relation_id} outside [0, {self.num_relation_types})")
            if (e.src, e.dst) in seen:
                out.append(f"edges[{k}] duplicates pair ({e.src}, {e.dst})")
            seen.add((e.src, e.dst))
        if self.complete and len(self.edges) != n * (n - 1):
            out.append(f"graph declared complete but has {len(self.edges)} edges, expected n(n-1)={n * (n - 1)}")
        return out


def _require(obj: dict, key: str, kind, where: str):
    if key not in obj:
        raise ParseError(f"missing field '{key}'", where)
    value = obj[key]
    if kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise ParseError(f"field '{key}' has type {type(value).__name__}, expected {kind.__name__}", where)
    return value


def graph_from_dict(doc: Any, num_object_categories: int = NUM_OBJECT_CATEGORIES,
                    num_relation_types: int = NUM_RELATION_TYPES) -> SceneGraph:
    if not isinstance(doc, dict):
        raise ParseError("top-level value must be an object", "document")
    width = _require(doc, "width", int, "document")
    height = _require(doc, "height", int, "document")
    complete = doc.get("complete", False)
    if not isinstance(complete, bool):
        raise ParseError("field 'complete' must be a boolean", "document")
    raw_nodes = _require(doc, "nodes", list, "document")
    raw_edges = _require(doc, "edges", list, "document")

    nodes = []
    for i, rn in enumerate(raw_nodes):
        where = f"nodes[{i}]"
        if not isinstance(rn, dict):
            raise ParseError("node must be an object", where)
        label = _require(rn, "label", str, where)
        cat = _require(rn, "category_id", int, where)
        box = _require(rn, "box", list, where)
        if len(box) != 4 or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in box):
            raise ParseError("box must be [x, y, w, h] numbers", f"{where}.box")
        conf = rn.get("confidence", 1.0)
        if not isinstance(conf, (int, float)) or isinstance(conf, bool):
            raise ParseError("confidence must be a number", f"{where}.confidence")
        nodes.append(SceneNode(cat, label, BoundingBox(*(float(v) for v in box)), float(conf)))

    edges = []
    for k, re_ in enumerate(raw_edges):
        where = f"edges[{k}]"
        if not isinstance(re_, dict):
            raise ParseError("edge must be an object", where)
        edges.append(SceneEdge(
            _require(re_, "src", int, where),
            _require(re_, "dst", int, where),
            _require(re_, "relation_id", int, where),
            _require(re_, "relation_label", str, where),
        ))
    return SceneGraph(tuple(nodes), tuple(edges), width, height, complete,
                      num_object_categories, num_relation_types)


def parse_scene_graph(text: str, **vocab) -> SceneGraph:
    """Parse a scene-graph JSON document.

    Raises :class:`ParseError` for malformed JSON or fields of the wrong type,
    and :class:`ValidationError` listing every invariant violation otherwise.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from exc
    return graph_from_dict(doc, **vocab)


def graph_to_dict(g: SceneGraph) -> dict:
    return {
        "width": g.bg_width,
        "height": g.bg_height,
        "complete": g.complete,
        "nodes": [
            {"label": n.label, "category_id": n.category_id, "box": n.box.as_list(), "confidence": n.confidence}
            for n in g.nodes
        ],
        "edges": [
            {"src": e.src, "dst": e.dst, "relation_id": e.relation_id, "relation_label": e.relation_label}
            for e in g.edges
        ],
    }


def serialize_scene_graph(g: SceneGraph) -> str:
    return json.dumps(graph_to_dict(g), indent=1)


def load_scene_graph(path) -> SceneGraph:
    with open(path, encoding="utf-8") as fh:
        return parse_scene_graph(fh.read())


def truncate_to_top_k(g: SceneGraph, k: int) -> SceneGraph:
    """Keep the ``k`` most confident nodes, in their original relative order.

    Ties keep the earlier node. Edges touching a dropped node are removed and the
    surviving edges are re-indexed.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    n = g.num_nodes
    if n <= k:
        return g
    order = sorted(range(n), key=lambda i: (-g.nodes[i].confidence, i))
    keep = sorted(order[:k])
    remap = {old: new for new, old in enumerate(keep)}
    edges = tuple(
        SceneEdge(remap[e.src], remap[e.dst], e.relation_id, e.relation_label)
        for e in g.edges
        if e.src in remap and e.dst in remap
    )
    return SceneGraph(tuple(g.nodes[i] for i in keep), edges, g.bg_width, g.bg_height,
                      g.complete, g.num_object_categories, g.num_relation_types)


def adjacency_matrix(g: SceneGraph) -> np.ndarray:
    adj = np.zeros((g.num_nodes, g.num_nodes), dtype=bool)
    for e in g.edges:
        adj[e.src, e.dst] = True
    return adj


def complete_graph(nodes: Iterable[SceneNode], bg_width: int, bg_height: int,
                   relation=lambda i, j: (0, "near")) -> SceneGraph:
    """Build a complete directed graph; ``relation(i, j)`` gives ``(id, label)``."""
    nodes = tuple(nodes)
    edges = []
    for i in range(len(nodes)):
        for j in range(len(nodes)):
            if i != j:
                rid, rlabel = relation(i, j)
                edges.append(SceneEdge(i, j, rid, rlabel))
    return SceneGraph(nodes, tuple(edges), bg_width, bg_height, complete=True)
