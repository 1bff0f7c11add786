"""Denoising-autoencoder corruption: span masking and sentence permutation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..vocab import MASK, Vocab


@dataclass
class NoiseConfig:
    span_mask_prob: float = 0.35
    span_length_lambda: float = 3.5
    sentence_permute: bool = True

    def __post_init__(self):
        if not 0.0 <= self.span_mask_prob <= 1.0:
            raise ValueError("span_mask_prob in [0, 1]")
        if self.span_length_lambda < 0:
            raise ValueError("span_length_lambda >= 0")


def _mean_span_length(lam: float) -> float:
    # E[max(1, Poisson(lam))] = lam + P(X = 0)
    return lam + math.exp(-lam)


def _start_prob(cfg: NoiseConfig) -> float:
    # solves f = p*E / (p*E + 1 - p) for the expected masked fraction f
    f = cfg.span_mask_prob
    if f >= 1.0:
        return 1.0
    e = _mean_span_length(cfg.span_length_lambda)
    return f / (e - f * (e - 1.0))


def dae_noise(
    tokens: list[int], cfg: NoiseConfig, rng: np.random.Generator, vocab: Vocab | None = None
) -> list[int]:
    """Corrupt a token sequence; deterministic given the RNG state.

    Each masked span collapses to a single <mask>; spans that touch merge,
    so the output never holds two adjacent mask tokens. With
    sentence_permute, sentence units (split after tokens whose symbol ends
    with ".") are shuffled before masking.
    """
    tokens = list(tokens)
    if cfg.sentence_permute and vocab is not None and len(tokens) > 1:
        sentences: list[list[int]] = [[]]
        for t in tokens:
            sentences[-1].append(t)
            if vocab.symbol(t).endswith("."):
                sentences.append([])
        sentences = [s for s in sentences if s]
        if len(sentences) > 1:
            order = rng.permutation(len(sentences))
            tokens = [t for i in order for t in sentences[i]]

    if cfg.span_mask_prob <= 0.0:
        return tokens
    p_start = _start_prob(cfg)
    out: list[int] = []
    i = 0
    while i < len(tokens):
        if rng.random() < p_start:
            span = max(1, int(rng.poisson(cfg.span_length_lambda)))
            span = min(span, len(tokens) - i)
            if out and out[-1] == MASK:
                pass  # adjacent span: extend the previous mask
            else:
                out.append(MASK)
            i += span
        else:
            out.append(tokens[i])
            i += 1
    return out
