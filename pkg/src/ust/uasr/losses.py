"""Loss pieces for adversarial phoneme recognition training."""

from __future__ import annotations

import torch
import torch.nn.functional as F

from ..errors import ShapeMismatchError


def gaussian_perturb(
    frames: torch.Tensor, sigma: float, seed: int | None = None, generator=None
) -> torch.Tensor:
    """frames + sigma * z, z ~ N(0, I); bit-reproducible given a seed."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return frames
    if generator is None and seed is not None:
        generator = torch.Generator().manual_seed(seed)
    noise = torch.randn(frames.shape, generator=generator, dtype=frames.dtype)
    return frames + sigma * noise


def rdrop_loss(logits1: torch.Tensor, logits2: torch.Tensor) -> torch.Tensor:
    """Symmetric KL between the two softmax sequences, averaged over frames."""
    if logits1.shape != logits2.shape:
        raise ShapeMismatchError(f"{tuple(logits1.shape)} vs {tuple(logits2.shape)}")
    lp1 = F.log_softmax(logits1, dim=-1)
    lp2 = F.log_softmax(logits2, dim=-1)
    p1, p2 = lp1.exp(), lp2.exp()
    kl12 = (p1 * (lp1 - lp2)).sum(dim=-1)
    kl21 = (p2 * (lp2 - lp1)).sum(dim=-1)
    return (0.5 * kl12 + 0.5 * kl21).mean()


def smoothness_penalty(logits: torch.Tensor) -> torch.Tensor:
    """Mean squared difference of consecutive frame logits."""
    if logits.shape[0] < 2:
        return logits.sum() * 0.0
    diff = logits[1:] - logits[:-1]
    return diff.pow(2).sum(dim=-1).mean()


def diversity_penalty(softmax_frames: torch.Tensor) -> torch.Tensor:
    """log C minus entropy of the batch-mean phoneme distribution (>= 0)."""
    mean = softmax_frames.mean(dim=0)
    ent = -(mean * torch.log(mean + 1e-12)).sum()
    c = softmax_frames.shape[-1]
    return torch.log(torch.tensor(float(c))) - ent


def gradient_penalty(
    disc, real: torch.Tensor, fake: torch.Tensor, generator=None
) -> torch.Tensor:
    """E ||grad D(x_hat)||^2 on a random real/fake interpolate.

    Sequences are cropped to the shorter length before mixing.
    """
    n = min(real.shape[0], fake.shape[0])
    alpha = torch.rand((), generator=generator)
    mixed = alpha * real[:n] + (1 - alpha) * fake[:n]
    mixed = mixed.detach().requires_grad_(True)
    score = disc(mixed)
    (grad,) = torch.autograd.grad(score, mixed, create_graph=True)
    return grad.pow(2).sum(dim=-1).mean()
