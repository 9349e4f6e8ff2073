"""Edge-aware multi-head graph transformer.

Graphs are batched densely: node features ``x`` are ``B x n x d``, edge
features ``e`` are ``B x n x n x d`` (entry ``[b, i, j]`` is the feature of edge
``i -> j``; zero where there is no edge), ``adjacency`` is ``B x n x n`` bool and
``node_mask`` flags real (non-padding) nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import torch
import torch.nn as nn


class GtnConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GtnConfig:
    num_layers: int = 5
    heads: int = 8
    d_in: int = 768
    d_out: int = 256
    mlp_hidden: int | None = None

    def __post_init__(self):
        if self.num_layers < 1:
            raise GtnConfigError(f"num_layers must be >= 1, got {self.num_layers}")
        if not 1 <= self.heads <= self.d_out:
            raise GtnConfigError(f"heads must lie in [1, d_out={self.d_out}], got {self.heads}")

    @property
    def d_head(self) -> int:
        return self.d_out // self.heads

    @property
    def hidden(self) -> int:
        return self.mlp_hidden or 2 * self.d_out


@dataclass
class GraphBatch:
    x: torch.Tensor
    e: torch.Tensor
    adjacency: torch.Tensor
    node_mask: torch.Tensor

    @property
    def num_nodes(self) -> torch.Tensor:
        return self.node_mask.sum(-1)

    def check_finite(self):
        if not torch.isfinite(self.x).all():
            raise FloatingPointError("non-finite node features")
        if not torch.isfinite(self.e).all():
            raise FloatingPointError("non-finite edge features")

    def permute(self, perm: torch.Tensor) -> "GraphBatch":
        """Reorder nodes of every graph in the batch by ``perm``."""
        return GraphBatch(
            self.x[:, perm],
            self.e[:, perm][:, :, perm],
            self.adjacency[:, perm][:, :, perm],
            self.node_mask[:, perm],
        )


def edge_attention_scores(q: torch.Tensor, k: torch.Tensor, e: torch.Tensor) -> torch.Tensor:
    """``(q.k + q.e + e.k) / sqrt(d_h)`` over the last axis, broadcasting the rest."""
    d_h = q.shape[-1]
    return ((q * k).sum(-1) + (q * e).sum(-1) + (e * k).sum(-1)) / math.sqrt(d_h)


def attention_matrix(edge_scores: torch.Tensor, self_scores: torch.Tensor,
                     adjacency: torch.Tensor) -> torch.Tensor:
    """Combine pair and self scores into a masked ``... x n x n`` logit matrix.

    Off-diagonal entries keep the edge score where ``adjacency`` is set; the
    diagonal holds the self score; everything else is ``-inf``.
    """
    n = edge_scores.shape[-1]
    eye = torch.eye(n, dtype=torch.bool, device=edge_scores.device)
    adjacency = adjacency & ~eye
    out = torch.where(adjacency, edge_scores, torch.full_like(edge_scores, float("-inf")))
    return torch.where(eye, self_scores.unsqueeze(-1).expand_as(out), out)


class GtnLayer(nn.Module):
    """One edge-aware attention layer.

    Each head works in ``d_head = d_out // heads`` dims. When ``heads`` does not
    divide ``d_out`` the concatenated message is ``heads * d_head`` wide and the
    MLP maps it back to ``d_out``; edge features stay ``d_out`` wide and the
    heads read their leading ``heads * d_head`` channels.
    """

    def __init__(self, d_in: int, d_out: int, heads: int, mlp_hidden: int | None = None):
        super().__init__()
        if not 1 <= heads <= d_out:
            raise GtnConfigError(f"heads must lie in [1, d_out={d_out}], got {heads}")
        self.heads = heads
        self.d_head = d_out // heads
        inner = heads * self.d_head
        self.w_q = nn.Linear(d_in, inner, bias=False)
        self.w_k = nn.Linear(d_in, inner, bias=False)
        self.w_v = nn.Linear(d_in, inner, bias=False)
        # one edge projection per head, stored side by side
        self.w_e = nn.Linear(d_in, d_out, bias=False)
        hidden = mlp_hidden or 2 * d_out
        self.mlp = nn.Sequential(nn.Linear(inner, hidden), nn.GELU(), nn.Linear(hidden, d_out))
        self.residual = nn.Identity() if d_in == d_out else nn.Linear(d_in, d_out, bias=False)
        self.norm = nn.LayerNorm(d_out)

    def _split(self, t: torch.Tensor) -> torch.Tensor:
        return t.reshape(*t.shape[:-1], self.heads, self.d_head)

    def attention(self, batch: GraphBatch):
        """Return ``(weights B x H x n x n, values B x n x H x d_h, edges B x n x n x d_out)``."""
        q = self._split(self.w_q(batch.x))
        k = self._split(self.w_k(batch.x))
        v = self._split(self.w_v(batch.x))
        e_proj = self.w_e(batch.e)
        e = self._split(e_proj[..., :self.heads * self.d_head])
        # B x n x n x H: query i against key j through edge (i, j)
        pair = edge_attention_scores(q.unsqueeze(2), k.unsqueeze(1), e)
        own = (q * k).sum(-1) / math.sqrt(self.d_head)
        adjacency = batch.adjacency & batch.node_mask.unsqueeze(1) & batch.node_mask.unsqueeze(2)
        logits = attention_matrix(pair.permute(0, 3, 1, 2), own.permute(0, 2, 1), adjacency.unsqueeze(1))
        return torch.softmax(logits, dim=-1), v, e_proj

    def forward(self, batch: GraphBatch, return_attention: bool = False):
        weights, v, e_proj = self.attention(batch)
        msg = torch.einsum("bhij,bjhd->bihd", weights, v).reshape(*batch.x.shape[:2], -1)
        x = self.norm(self.residual(batch.x) + self.mlp(msg))
        x = x * batch.node_mask.unsqueeze(-1)
        out = replace(batch, x=x, e=e_proj * batch.adjacency.unsqueeze(-1))
        return (out, weights) if return_attention else out


class GraphTransformer(nn.Module):
    def __init__(self, config: GtnConfig = GtnConfig()):
        super().__init__()
        self.config = config
        dims = [config.d_in] + [config.d_out] * config.num_layers
        self.layers = nn.ModuleList(
            GtnLayer(dims[i], dims[i + 1], config.heads, config.hidden) for i in range(config.num_layers)
        )

    def forward(self, batch: GraphBatch) -> torch.Tensor:
        batch.check_finite()
        for layer in self.layers:
            batch = layer(batch)
        return batch.x


def gtn_layer_forward(batch: GraphBatch, layer: GtnLayer) -> GraphBatch:
    batch.check_finite()
    return layer(batch)


def gtn_forward(batch: GraphBatch, config: GtnConfig, layers) -> torch.Tensor:
    layers = list(layers)
    if len(layers) != config.num_layers:
        raise GtnConfigError(f"expected {config.num_layers} layers, got {len(layers)}")
    batch.check_finite()
    for layer in layers:
        batch = layer(batch)
    return batch.x
