"""Foreground-conditioned multi-head attention over enhanced scene nodes."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn


class CapacityError(ValueError):
    pass


@dataclass
class AttentionResult:
    f_att: torch.Tensor
    weights: torch.Tensor  # B x H x n

    def weights_json(self, index: int = 0) -> list[list[float]]:
        return self.weights[index].detach().cpu().double().tolist()


class CrossModalAttention(nn.Module):
    """Single query (the projected foreground category) against ``n`` scene nodes.

    Learned per-position key/value offsets are indexed by node order and are
    omitted entirely when ``use_pos_encoding`` is false. The output residual adds
    the projected query.
    """

    def __init__(self, d_model: int, d_embed: int = 768, heads: int = 8, d_k: int = 64, d_v: int = 64,
                 n_max: int = 30, use_pos_encoding: bool = True, use_residual: bool = True):
        super().__init__()
        self.heads, self.d_k, self.d_v, self.n_max = heads, d_k, d_v, n_max
        self.use_residual = use_residual
        self.p_f = nn.Linear(d_embed, d_model)
        self.w_q = nn.Linear(d_model, heads * d_k, bias=False)
        self.w_k = nn.Linear(d_model, heads * d_k, bias=False)
        self.w_v = nn.Linear(d_model, heads * d_v, bias=False)
        self.w_o = nn.Linear(heads * d_v, d_model, bias=False)
        if use_pos_encoding:
            self.pe_k = nn.Parameter(torch.randn(heads, n_max, d_k) * 0.02)
            self.pe_v = nn.Parameter(torch.randn(heads, n_max, d_v) * 0.02)
        else:
            self.pe_k = self.pe_v = None
        self.norm = nn.LayerNorm(d_model)

    def project_foreground(self, c_f: torch.Tensor) -> torch.Tensor:
        return self.p_f(c_f)

    def forward(self, c_f: torch.Tensor, x_enh: torch.Tensor, node_mask: torch.Tensor | None = None) -> AttentionResult:
        """``c_f``: ``B x d_embed``; ``x_enh``: ``B x n x d_model``; ``node_mask``: ``B x n``."""
        return self.attend(self.project_foreground(c_f), x_enh, node_mask)

    def attend(self, c_hat: torch.Tensor, x_enh: torch.Tensor, node_mask: torch.Tensor | None = None) -> AttentionResult:
        B, n, _ = x_enh.shape
        if n > self.n_max:
            raise CapacityError(f"{n} nodes exceed attention capacity n_max={self.n_max}")
        q = self.w_q(c_hat).reshape(B, self.heads, 1, self.d_k)
        k = self.w_k(x_enh).reshape(B, n, self.heads, self.d_k).transpose(1, 2)
        v = self.w_v(x_enh).reshape(B, n, self.heads, self.d_v).transpose(1, 2)
        if self.pe_k is not None:
            k = k + self.pe_k[:, :n]
            v = v + self.pe_v[:, :n]
        logits = (q @ k.transpose(-1, -2)).squeeze(2) / math.sqrt(self.d_k)  # B x H x n
        if node_mask is not None:
            logits = logits.masked_fill(~node_mask.unsqueeze(1), float("-inf"))
        weights = torch.softmax(logits, dim=-1)
        heads_out = (weights.unsqueeze(2) @ v).squeeze(2)  # B x H x d_v
        out = self.w_o(heads_out.reshape(B, -1))
        if self.use_residual:
            out = out + c_hat
        return AttentionResult(self.norm(out), weights)


def cross_attend(c_hat: torch.Tensor, x_enh: torch.Tensor, module: CrossModalAttention,
                 node_mask: torch.Tensor | None = None) -> AttentionResult:
    """Unbatched convenience wrapper: ``c_hat`` is ``d_model``, ``x_enh`` is ``n x d_model``."""
    if c_hat.dim() == 1:
        res = module.attend(c_hat.unsqueeze(0), x_enh.unsqueeze(0),
                            None if node_mask is None else node_mask.unsqueeze(0))
        return AttentionResult(res.f_att[0], res.weights[0])
    return module.attend(c_hat, x_enh, node_mask)
