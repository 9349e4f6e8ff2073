"""Adversarial and reconstruction objectives."""

from __future__ import annotations

import math

import torch

SCORE_CLAMP = 1e-7


class ScoreDomainError(ValueError):
    pass


def _check_scores(scores: torch.Tensor, name: str) -> torch.Tensor:
    if scores.numel() and (not torch.isfinite(scores).all() or (scores < 0).any() or (scores > 1).any()):
        raise ScoreDomainError(f"{name} must lie in (0, 1)")
    return scores.clamp(SCORE_CLAMP, 1 - SCORE_CLAMP)


def adaptive_weights(t: torch.Tensor) -> torch.Tensor:
    """``[sin(t_r pi/2), cos(t_r pi/2), cos(t_r pi/2)]`` per row of ``t``."""
    a = t[..., 0] * (math.pi / 2)
    return torch.stack([torch.sin(a), torch.cos(a), torch.cos(a)], dim=-1)


def reconstruction_loss(t: torch.Tensor, t_gt: torch.Tensor) -> torch.Tensor:
    """Scale-gated squared error, averaged over the batch.

    Weights come from the predicted ``t`` and are treated as constants, so a
    large predicted scale silences the translation terms.
    """
    w = adaptive_weights(t.detach())
    return (w * (t - t_gt) ** 2).sum(-1).mean()


def discriminator_losses(real_scores: torch.Tensor, fake_scores: torch.Tensor, gen_scores: torch.Tensor):
    """``(mean log D(real), mean log(1-D(fake)) + mean log(1-D(G)))``; the critic ascends both."""
    real = _check_scores(real_scores, "real scores")
    fake = _check_scores(fake_scores, "fake scores")
    gen = _check_scores(gen_scores, "generated scores")
    l_real = torch.log(real).mean() if real.numel() else torch.zeros((), dtype=real.dtype)
    l_fake = torch.zeros((), dtype=real.dtype)
    if fake.numel():
        l_fake = l_fake + torch.log1p(-fake).mean()
    if gen.numel():
        l_fake = l_fake + torch.log1p(-gen).mean()
    return l_real, l_fake


def adversarial_loss(gen_scores: torch.Tensor) -> torch.Tensor:
    """Non-saturating generator term ``-mean log D(G(x))``."""
    return -torch.log(_check_scores(gen_scores, "generated scores")).mean()


def generator_loss(gen_scores, t, t_gt, lambda_rec: float) -> torch.Tensor:
    adv = adversarial_loss(gen_scores) if gen_scores is not None else torch.zeros(())
    return adv + lambda_rec * reconstruction_loss(t, t_gt)
