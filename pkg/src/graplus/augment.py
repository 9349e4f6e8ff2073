"""Training-time augmentation of composite samples."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import torch
import torchvision.transforms.functional as TF

JITTER_RANGE = (0.8, 1.2)
BLUR_KERNEL = 5
BLUR_SIGMA = (0.1, 2.0)


@dataclass(frozen=True)
class CompositeSample:
    """Planes share one ``S x S`` frame; ``fg`` holds the object fitted and centered."""

    bg: torch.Tensor  # 3 x S x S in [0, 1]
    fg: torch.Tensor  # 3 x S x S
    mask: torch.Tensor  # 1 x S x S
    t: torch.Tensor  # (t_r, t_x, t_y)
    fg_dims: torch.Tensor  # fitted foreground size in frame pixels
    label: int


@dataclass(frozen=True)
class AugmentConfig:
    p_flip: float = 0.5
    p_jitter: float = 0.5
    p_blur: float = 0.5
    p_gray: float = 0.2


def hflip(sample: CompositeSample) -> CompositeSample:
    t = sample.t.clone()
    t[1] = 1 - t[1]
    return replace(sample, bg=sample.bg.flip(-1), fg=sample.fg.flip(-1), mask=sample.mask.flip(-1), t=t)


def _photometric(sample: CompositeSample, fn) -> CompositeSample:
    return replace(sample, bg=fn(sample.bg).clamp(0, 1), fg=fn(sample.fg).clamp(0, 1))


def augment(sample: CompositeSample, rng: np.random.Generator, config: AugmentConfig = AugmentConfig()) -> CompositeSample:
    """Random flip, color jitter, blur and grayscale, each with its own probability.

    A flip mirrors every plane and maps ``t_x`` to ``1 - t_x``; photometric ops
    touch only the color planes. Every draw comes from ``rng`` in a fixed order,
    so the stream advances identically whatever gets applied.
    """
    u = rng.random(4)
    jitter = rng.uniform(*JITTER_RANGE, size=3)
    sigma = rng.uniform(*BLUR_SIGMA)
    if u[0] < config.p_flip:
        sample = hflip(sample)
    if u[1] < config.p_jitter:
        b, c, s = (float(v) for v in jitter)
        sample = _photometric(sample, lambda im: TF.adjust_saturation(TF.adjust_contrast(TF.adjust_brightness(im, b), c), s))
    if u[2] < config.p_blur:
        sample = _photometric(sample, lambda im: TF.gaussian_blur(im, [BLUR_KERNEL, BLUR_KERNEL], [float(sigma)] * 2))
    if u[3] < config.p_gray:
        sample = _photometric(sample, lambda im: TF.rgb_to_grayscale(im, num_output_channels=3))
    return sample
