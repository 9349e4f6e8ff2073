"""Placement-realism critic over composite RGB + mask."""

from __future__ import annotations

import math

import torch
import torch.nn as nn


class Discriminator(nn.Module):
    """Up to five stride-2 conv stages; a patch head and a global head vote on realism.

    Small inputs get fewer stages so the last feature map stays at least 4x4.
    ``forward`` returns scores in (0, 1); ``logits`` the pre-sigmoid values.
    """

    def __init__(self, in_channels: int = 4, base: int = 8, stages: int = 5, image_size: int = 128):
        super().__init__()
        stages = max(1, min(stages, int(math.log2(image_size)) - 2))
        layers, c = [], in_channels
        for k in range(stages):
            out = base * 2 ** min(k, 3)
            layers += [nn.Conv2d(c, out, 4, 2, 1)]
            if k > 0:
                layers += [nn.InstanceNorm2d(out, affine=True)]
            layers += [nn.LeakyReLU(0.2)]
            c = out
        self.features = nn.Sequential(*layers)
        self.patch_head = nn.Conv2d(c, 1, 3, 1, 1)
        self.global_head = nn.Linear(c, 1)

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        h = self.features(x)
        patch = self.patch_head(h).mean(dim=(1, 2, 3))
        glob = self.global_head(h.mean(dim=(2, 3))).squeeze(-1)
        return 0.5 * (patch + glob)

    def forward(self, composite: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.logits(torch.cat([composite, mask], dim=1)))
