"""Placement regression, affine warp construction and differentiable compositing.

Sampling convention: ``affine_grid``/``grid_sample`` with ``align_corners=False``
(normalized coordinates address pixel edges, so ``-1``/``+1`` are the outer
borders of the image) and zero padding outside the source. The foreground plane
holds the object fitted aspect-preserving and centered in the canvas; with that
layout, parameters ``t`` place the object exactly at the box given by
:func:`graplus.evaluation.params_to_bbox`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

EPS = 1e-6


@dataclass(frozen=True)
class PlacementParams:
    t_r: float
    t_x: float
    t_y: float

    def __post_init__(self):
        for name in ("t_r", "t_x", "t_y"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name}={v} outside the open interval (0, 1)")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.t_r, self.t_x, self.t_y)

    def tensor(self, dtype=torch.float32) -> torch.Tensor:
        return torch.tensor(self.as_tuple(), dtype=dtype)


class Regressor(nn.Module):
    """MLP over ``[f_att, z]`` followed by ``0.5 * tanh(.) + 0.5``."""

    def __init__(self, d_att: int = 512, d_noise: int = 2048, hidden: int = 512):
        super().__init__()
        self.d_noise = d_noise
        self.net = nn.Sequential(
            nn.Linear(d_att + d_noise, hidden), nn.LeakyReLU(0.2),
            nn.Linear(hidden, hidden // 2), nn.LeakyReLU(0.2),
            nn.Linear(hidden // 2, 3),
        )

    def raw(self, f_att: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        return self.net(torch.cat([f_att, z], dim=-1))

    def forward(self, f_att: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        return 0.5 * torch.tanh(self.raw(f_att, z)) + 0.5


def regress_params(f_att: torch.Tensor, z: torch.Tensor, regressor: Regressor) -> PlacementParams:
    with torch.no_grad():
        t = regressor(f_att.reshape(1, -1), z.reshape(1, -1))[0]
    return PlacementParams(*(float(v) for v in t))


def fitted_size(fg_dims, canvas_dims) -> tuple[float, float]:
    """Pixel size of a ``fg_dims`` object scaled to fit ``canvas_dims`` without cropping."""
    w_f, h_f = fg_dims
    W, H = canvas_dims
    s = min(W / w_f, H / h_f)
    return (w_f * s, h_f * s)


def affine_matrix(t: torch.Tensor, fg_dims, img_dims, eps: float = EPS) -> torch.Tensor:
    """Build the ``... x 2 x 3`` sampling matrix for parameters ``t = [t_r, t_x, t_y]``.

    ``fg_dims`` are the fitted foreground width/height ``(b_w, b_h)`` in the same
    units as ``img_dims = (W, H)``. Both may be tensors with a leading batch axis.
    """
    t = torch.as_tensor(t)
    b_w, b_h = (torch.as_tensor(v, dtype=t.dtype) for v in _pair(fg_dims))
    W, H = (torch.as_tensor(v, dtype=t.dtype) for v in _pair(img_dims))
    t_r, t_x, t_y = t[..., 0], t[..., 1], t[..., 2]
    inv = 1.0 / (t_r + eps)
    zero = torch.zeros_like(inv)
    row0 = torch.stack([inv, zero, (1 - 2 * t_x) * (inv - b_w / W)], dim=-1)
    row1 = torch.stack([zero, inv, (1 - 2 * t_y) * (inv - b_h / H)], dim=-1)
    return torch.stack([row0, row1], dim=-2)


def _pair(dims):
    if isinstance(dims, torch.Tensor) and dims.dim() >= 1 and dims.shape[-1] == 2:
        return dims[..., 0], dims[..., 1]
    a, b = dims
    return a, b


def compose(bg: torch.Tensor, fg: torch.Tensor, mask: torch.Tensor, t: torch.Tensor,
            fg_dims, eps: float = EPS) -> tuple[torch.Tensor, torch.Tensor]:
    """Warp ``fg``/``mask`` by ``t`` and alpha-blend over ``bg``.

    Accepts unbatched (``C x H x W``) or batched (``B x C x H x W``) planes; ``t``
    is ``3`` or ``B x 3``. ``fg_dims`` are the fitted foreground pixel sizes.
    Returns ``(composite, warped_mask)``.
    """
    unbatched = bg.dim() == 3
    if unbatched:
        bg, fg, mask, t = bg[None], fg[None], mask[None], t.reshape(1, 3)
        if isinstance(fg_dims, torch.Tensor):
            fg_dims = fg_dims.reshape(1, 2)
    if bg.shape[-2:] != fg.shape[-2:] or bg.shape[-2:] != mask.shape[-2:]:
        raise ValueError(f"spatial size mismatch: bg {tuple(bg.shape)}, fg {tuple(fg.shape)}, mask {tuple(mask.shape)}")
    if bg.shape[1] != fg.shape[1]:
        raise ValueError(f"channel mismatch: bg {bg.shape[1]} vs fg {fg.shape[1]}")
    B, C, H, W = bg.shape
    if not isinstance(fg_dims, torch.Tensor):
        fg_dims = torch.tensor(fg_dims, dtype=t.dtype).expand(B, 2)
    theta = affine_matrix(t, fg_dims.to(t.dtype), (W, H), eps)
    grid = F.affine_grid(theta.to(bg.dtype), [B, C, H, W], align_corners=False)
    warped = F.grid_sample(torch.cat([fg, mask], dim=1), grid, mode="bilinear",
                           padding_mode="zeros", align_corners=False)
    fg_w, m_w = warped[:, :C], warped[:, C:]
    comp = m_w * fg_w + (1 - m_w) * bg
    if unbatched:
        return comp[0], m_w[0]
    return comp, m_w


def composition_gradient_check(t, bg: torch.Tensor, fg: torch.Tensor, mask: torch.Tensor,
                               fg_dims, step: float = 1e-4) -> float:
    """Max relative error between autograd and central differences of ``sum(composite)`` w.r.t. ``t``."""
    bg, fg, mask = bg.double(), fg.double(), mask.double()
    t0 = torch.tensor(tuple(t.as_tuple()) if isinstance(t, PlacementParams) else t, dtype=torch.float64)
    tv = t0.clone().requires_grad_(True)
    compose(bg, fg, mask, tv, fg_dims)[0].sum().backward()
    analytic = tv.grad.detach()
    numeric = torch.zeros(3, dtype=torch.float64)
    with torch.no_grad():
        for i in range(3):
            d = torch.zeros(3, dtype=torch.float64)
            d[i] = step
            plus = compose(bg, fg, mask, t0 + d, fg_dims)[0].sum()
            minus = compose(bg, fg, mask, t0 - d, fg_dims)[0].sum()
            numeric[i] = (plus - minus) / (2 * step)
    scale = torch.maximum(analytic.abs(), numeric.abs()).clamp_min(1e-6)
    return float(((analytic - numeric).abs() / scale).max())


def crosses_grid_knot(t, fg_dims, img_dims, step: float = 1e-4, eps: float = EPS) -> bool:
    """True if moving any component of ``t`` by ``+-step`` carries a sampling point across a pixel center.

    Bilinear sampling is piecewise linear between source pixel centers, so a
    central difference that straddles one of these knots sees a kink.
    """
    W, H = (int(v) for v in img_dims)
    t0 = torch.as_tensor(t, dtype=torch.float64)
    cells = []
    for i in range(3):
        for sign in (-1.0, 1.0):
            tv = t0.clone()
            tv[i] += sign * step
            theta = affine_matrix(tv, fg_dims, (W, H), eps)[None]
            grid = F.affine_grid(theta, [1, 1, H, W], align_corners=False)[0]
            u = ((grid[..., 0] + 1) * W - 1) / 2
            v = ((grid[..., 1] + 1) * H - 1) / 2
            cells.append((torch.floor(u), torch.floor(v)))
        (u_lo, v_lo), (u_hi, v_hi) = cells[-2:]
        if not (torch.equal(u_lo, u_hi) and torch.equal(v_lo, v_hi)):
            return True
    return False


def letterbox(image: torch.Tensor, size: int = 256, fill: float = 0.0):
    """Resize ``C x h x w`` to fit a ``size x size`` canvas, centered.

    Returns ``(canvas, scale, (offset_x, offset_y))`` so that a source pixel
    coordinate ``p`` maps to ``p * scale + offset``.
    """
    C, h, w = image.shape
    s = min(size / w, size / h)
    nw, nh = max(1, round(w * s)), max(1, round(h * s))
    resized = F.interpolate(image[None], size=(nh, nw), mode="bilinear", align_corners=False)[0]
    canvas = torch.full((C, size, size), fill, dtype=image.dtype)
    ox, oy = (size - nw) // 2, (size - nh) // 2
    canvas[:, oy:oy + nh, ox:ox + nw] = resized
    return canvas, s, (ox, oy)


def to_uint8(plane: torch.Tensor) -> np.ndarray:
    arr = plane.detach().clamp(0, 1).mul(255).round().to(torch.uint8).cpu().numpy()
    return np.transpose(arr, (1, 2, 0)) if arr.shape[0] > 1 else arr[0]


def export_composite(path, composite: torch.Tensor, t: PlacementParams, bbox) -> None:
    """Write an 8-bit PNG and a ``.json`` sidecar carrying the placement."""
    from PIL import Image

    path = Path(path)
    Image.fromarray(to_uint8(composite)).save(path)
    sidecar = {"t_r": t.t_r, "t_x": t.t_x, "t_y": t.t_y, "bbox": [float(v) for v in bbox]}
    path.with_suffix(".json").write_text(json.dumps(sidecar), encoding="utf-8")


def smooth_blob(size: int, cx: float, cy: float, radius: float, dtype=torch.float64) -> torch.Tensor:
    """Gaussian bump on a ``size x size`` grid, used for smooth test masks."""
    ys, xs = torch.meshgrid(torch.arange(size, dtype=dtype), torch.arange(size, dtype=dtype), indexing="ij")
    return torch.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2 * radius ** 2))[None]


__all__ = [
    "EPS", "PlacementParams", "Regressor", "regress_params", "fitted_size", "affine_matrix",
    "compose", "composition_gradient_check", "letterbox", "export_composite", "smooth_blob",
]
