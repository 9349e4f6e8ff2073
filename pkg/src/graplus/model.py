"""The placement generator: scene graph + foreground category -> placement parameters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .composer import Regressor
from .config import ModelConfig
from .cross_attention import CrossModalAttention
from .embeddings import EmbeddingTable, lookup
from .gtn import GraphBatch, GraphTransformer, GtnConfig
from .scene_graph import SceneGraph, truncate_to_top_k
from .spatial import SpatialProjection, enhance, spatial_vector


@dataclass
class EncodedGraph:
    object_labels: list[str]
    relation_labels: dict[tuple[int, int], str]
    adjacency: np.ndarray
    spatial: np.ndarray  # n x 9


def encode_graph(g: SceneGraph, node_budget: int) -> EncodedGraph:
    """Truncate to the node budget and order nodes by descending confidence.

    The order fixes which learned positional offset each node receives.
    """
    g = truncate_to_top_k(g, node_budget)
    order = sorted(range(g.num_nodes), key=lambda i: (-g.nodes[i].confidence, i))
    pos = {old: new for new, old in enumerate(order)}
    n = len(order)
    adj = np.zeros((n, n), dtype=bool)
    rels = {}
    for e in g.edges:
        i, j = pos[e.src], pos[e.dst]
        adj[i, j] = True
        rels[(i, j)] = e.relation_label
    bg = (g.bg_width, g.bg_height)
    spatial = np.stack([spatial_vector(g.nodes[k].box, bg).as_array() for k in order]) if n else np.zeros((0, 9))
    return EncodedGraph([g.nodes[k].label for k in order], rels, adj, spatial.astype(np.float32))


class Vocabulary:
    """Ordered label list for one embedding kind; index 0 is a padding row."""

    def __init__(self, labels=()):
        self.labels = ["<pad>"]
        self.index = {"<pad>": 0}
        for label in labels:
            self.add(label)

    def add(self, label: str) -> int:
        if label not in self.index:
            self.index[label] = len(self.labels)
            self.labels.append(label)
        return self.index[label]

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, label: str) -> int:
        return self.index[label]

    def matrix(self, table: EmbeddingTable, kind: str, seed: int) -> torch.Tensor:
        rows = [np.zeros(table.dim, np.float32)] + [lookup(table, lb, kind, seed) for lb in self.labels[1:]]
        return torch.from_numpy(np.stack(rows).astype(np.float32))


def collate_graphs(graphs: list[EncodedGraph], objects: Vocabulary, relations: Vocabulary) -> dict:
    """Pad a list of encoded graphs into index tensors of a common node count."""
    B = len(graphs)
    n = max(1, max(len(g.object_labels) for g in graphs))
    obj = torch.zeros(B, n, dtype=torch.long)
    rel = torch.zeros(B, n, n, dtype=torch.long)
    adj = torch.zeros(B, n, n, dtype=torch.bool)
    mask = torch.zeros(B, n, dtype=torch.bool)
    spatial = torch.zeros(B, n, 9)
    for b, g in enumerate(graphs):
        k = len(g.object_labels)
        obj[b, :k] = torch.tensor([objects[lb] for lb in g.object_labels], dtype=torch.long)
        for (i, j), lb in g.relation_labels.items():
            rel[b, i, j] = relations[lb]
        adj[b, :k, :k] = torch.from_numpy(g.adjacency)
        mask[b, :k] = True
        spatial[b, :k] = torch.from_numpy(g.spatial)
    # padded rows still need a finite, neutral spatial vector
    spatial[~mask] = torch.tensor([1, 1, 0, 0, 1, 1, 0.5, 0.5, 0.5], dtype=torch.float32)
    return {"objects": obj, "relations": rel, "adjacency": adj, "node_mask": mask, "spatial": spatial}


class PlacementGenerator(nn.Module):
    def __init__(self, config: ModelConfig, objects: Vocabulary, relations: Vocabulary,
                 table: EmbeddingTable | None = None):
        super().__init__()
        self.config = config
        self.objects, self.relations = objects, relations
        table = table if table is not None else EmbeddingTable(dim=config.embed_dim)
        if table.dim != config.embed_dim:
            raise ValueError(f"embedding table has dim {table.dim}, model expects {config.embed_dim}")
        obj_m = objects.matrix(table, "object", config.embedding_seed)
        rel_m = relations.matrix(table, "relation", config.embedding_seed)
        if config.trainable_embeddings:
            self.object_embed = nn.Parameter(obj_m)
            self.relation_embed = nn.Parameter(rel_m)
        else:
            self.register_buffer("object_embed", obj_m)
            self.register_buffer("relation_embed", rel_m)
        self.gtn = GraphTransformer(GtnConfig(config.gtn_layers, config.gtn_heads, config.embed_dim, config.d_out))
        self.spatial = SpatialProjection(config.d_spatial, config.pixel_scale) if config.use_spatial else None
        self.attention = CrossModalAttention(
            config.d_model, config.embed_dim, config.attn_heads, config.d_k, config.d_v, config.n_max,
            config.use_pos_encoding, config.use_residual,
        )
        self.regressor = Regressor(config.d_model, config.d_noise, config.regressor_hidden)

    def scene_features(self, batch: dict) -> torch.Tensor:
        adj = batch["adjacency"]
        x = self.object_embed[batch["objects"]]
        e = self.relation_embed[batch["relations"]] * adj.unsqueeze(-1)
        h = self.gtn(GraphBatch(x, e, adj, batch["node_mask"]))
        if self.spatial is not None:
            h = enhance(h, batch["spatial"], self.spatial)
        return h * batch["node_mask"].unsqueeze(-1)

    def forward(self, batch: dict, fg_index: torch.Tensor, z: torch.Tensor):
        """Return ``(t, attention)`` with ``t`` of shape ``B x 3``."""
        h = self.scene_features(batch)
        att = self.attention(self.object_embed[fg_index], h, batch["node_mask"])
        return self.regressor(att.f_att, z), att
