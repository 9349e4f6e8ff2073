import math

import pytest
import torch

from graplus.losses import (
    ScoreDomainError, adaptive_weights, adversarial_loss, discriminator_losses, generator_loss, reconstruction_loss,
)


def loop_rec(t, t_gt):
    total = 0.0
    for row, gt in zip(t.tolist(), t_gt.tolist()):
        a = row[0] * math.pi / 2
        w = (math.sin(a), math.cos(a), math.cos(a))
        total += sum(w[k] * (row[k] - gt[k]) ** 2 for k in range(3))
    return total / len(t)


def test_identity_is_zero():
    t = torch.rand(7, 3, dtype=torch.float64)
    assert reconstruction_loss(t, t).item() == 0.0


def test_full_scale_ignores_translation():
    t = torch.tensor([[1 - 1e-9, 0.1, 0.9]], dtype=torch.float64)
    gt = torch.tensor([[1 - 1e-9, 0.8, 0.2]], dtype=torch.float64)
    assert adaptive_weights(t)[0].tolist() == pytest.approx([1, 0, 0], abs=1e-8)
    assert reconstruction_loss(t, gt).item() < 1e-8


def test_tiny_scale_plug_in():
    t = torch.tensor([[1e-9, 0.2, 0.2]], dtype=torch.float64)
    gt = torch.tensor([[1e-9, 0.7, 0.2]], dtype=torch.float64)
    assert reconstruction_loss(t, gt).item() == pytest.approx(0.25, abs=1e-8)


def test_rec_matches_loop_oracle():
    g = torch.Generator().manual_seed(0)
    t, gt = torch.rand(16, 3, generator=g, dtype=torch.float64), torch.rand(16, 3, generator=g, dtype=torch.float64)
    assert abs(reconstruction_loss(t, gt).item() - loop_rec(t, gt)) < 1e-7


def test_weights_are_constants_for_backprop():
    t = torch.tensor([[0.3, 0.4, 0.5]], dtype=torch.float64, requires_grad=True)
    gt = torch.tensor([[0.5, 0.5, 0.5]], dtype=torch.float64)
    reconstruction_loss(t, gt).backward()
    w = adaptive_weights(t.detach())[0]
    assert torch.allclose(t.grad[0], 2 * w * (t.detach()[0] - gt[0]))


def test_discriminator_half_scores():
    s = torch.full((4,), 0.5, dtype=torch.float64)
    l_real, l_fake = discriminator_losses(s, s, s)
    assert l_real.item() == pytest.approx(math.log(0.5))
    assert l_fake.item() == pytest.approx(2 * math.log(0.5))


def test_discriminator_perfect_approaches_zero_from_below():
    l_real, l_fake = discriminator_losses(torch.full((3,), 1 - 1e-6), torch.full((3,), 1e-6), torch.full((3,), 1e-6))
    assert -1e-5 < l_real.item() < 0 and -1e-5 < l_fake.item() < 0


def test_discriminator_matches_loop_oracle():
    g = torch.Generator().manual_seed(3)
    real, fake, gen = (torch.rand(n, generator=g, dtype=torch.float64) for n in (5, 7, 6))
    l_real, l_fake = discriminator_losses(real, fake, gen)
    want_real = sum(math.log(v) for v in real.tolist()) / 5
    want_fake = sum(math.log(1 - v) for v in fake.tolist()) / 7 + sum(math.log(1 - v) for v in gen.tolist()) / 6
    assert abs(l_real.item() - want_real) < 1e-7
    assert abs(l_fake.item() - want_fake) < 1e-7


def test_generator_loss_cases():
    half = torch.full((4,), 0.5, dtype=torch.float64)
    t = torch.rand(4, 3, dtype=torch.float64)
    gt = torch.rand(4, 3, dtype=torch.float64)
    assert generator_loss(half, t, gt, 0.0).item() == pytest.approx(-math.log(0.5))
    assert generator_loss(half, t, t, 50.0).item() == pytest.approx(adversarial_loss(half).item())
    rec50 = generator_loss(half, t, gt, 50.0) - adversarial_loss(half)
    rec25 = generator_loss(half, t, gt, 25.0) - adversarial_loss(half)
    assert rec50.item() == pytest.approx(2 * rec25.item(), rel=1e-12)
    g = torch.Generator().manual_seed(1)
    s = torch.rand(4, generator=g, dtype=torch.float64)
    want = -sum(math.log(v) for v in s.tolist()) / 4 + 10 * loop_rec(t, gt)
    assert abs(generator_loss(s, t, gt, 10.0).item() - want) < 1e-7

def test_scores_outside_unit_interval_rejected():
    with pytest.raises(ScoreDomainError):
        discriminator_losses(torch.tensor([1.5]), torch.tensor([0.2]), torch.tensor([0.2]))
    with pytest.raises(ScoreDomainError):
        adversarial_loss(torch.tensor([float("nan")]))


def test_extreme_scores_clamped_finite():
    l_real, l_fake = discriminator_losses(torch.zeros(2), torch.ones(2), torch.ones(2))
    assert math.isfinite(l_real.item()) and math.isfinite(l_fake.item())
