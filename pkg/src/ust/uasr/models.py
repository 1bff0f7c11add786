"""Generator and discriminator for adversarial phoneme recognition.

The generator maps standardized feature frames to phoneme-class logits
(class 0 is silence, classes 1..P the inventory) and carries an auxiliary
head predicting k-means cluster ids of the input frames. Dropout masks
can be injected explicitly so losses stay deterministic under gradient
checking.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..vocab import SIL, Vocab


@dataclass(frozen=True)
class PhonemeClassMap:
    """Generator class index <-> phoneme vocabulary id (class 0 = silence)."""

    phoneme_ids: tuple[int, ...]  # content ids, class i+1 -> phoneme_ids[i]

    @classmethod
    def from_vocab(cls, vocab: Vocab) -> "PhonemeClassMap":
        return cls(phoneme_ids=tuple(vocab.content_ids))

    @property
    def n_classes(self) -> int:
        return len(self.phoneme_ids) + 1

    def to_class(self, vocab_id: int) -> int:
        if vocab_id == SIL:
            return 0
        return self.phoneme_ids.index(vocab_id) + 1

    def to_vocab(self, class_idx: int) -> int:
        if class_idx == 0:
            return SIL
        return self.phoneme_ids[class_idx - 1]

    def encode(self, phoneme_ids: list[int]) -> list[int]:
        return [self.to_class(p) for p in phoneme_ids]

    def one_hot(self, phoneme_ids: list[int]) -> torch.Tensor:
        return F.one_hot(
            torch.tensor(self.encode(phoneme_ids), dtype=torch.long), self.n_classes
        ).float()


def standardize(frames: torch.Tensor, eps: float = 1e-5) -> torch.Tensor:
    """Per-utterance feature standardization over time (stateless)."""
    mean = frames.mean(dim=0, keepdim=True)
    std = frames.std(dim=0, unbiased=False, keepdim=True)
    return (frames - mean) / (std + eps)


def dropout_mask(shape, p: float, generator=None) -> torch.Tensor:
    if p <= 0:
        return torch.ones(shape)
    keep = (torch.rand(shape, generator=generator) >= p).float()
    return keep / (1.0 - p)


def apply_dropout(
    x: torch.Tensor, p: float, training: bool, mask: torch.Tensor | None = None, generator=None
) -> torch.Tensor:
    if mask is not None:
        return x * mask
    if not training or p <= 0:
        return x
    return x * dropout_mask(x.shape, p, generator)


class PhonemeGenerator(nn.Module):
    def __init__(
        self,
        input_dim: int,
        n_classes: int,
        n_aux_clusters: int,
        hidden: int = 64,
        kernel: int = 3,
        input_dropout: float = 0.2,
        hidden_dropout: float = 0.1,
    ):
        super().__init__()
        self.input_dim = input_dim
        self.n_classes = n_classes
        self.input_dropout = input_dropout
        self.hidden_dropout = hidden_dropout
        self.arch = dict(
            input_dim=input_dim, n_classes=n_classes, n_aux_clusters=n_aux_clusters,
            hidden=hidden, kernel=kernel, input_dropout=input_dropout,
            hidden_dropout=hidden_dropout,
        )
        self.conv_in = nn.Conv1d(input_dim, hidden, kernel, padding=kernel // 2)
        self.conv_out = nn.Conv1d(hidden, n_classes, kernel, padding=kernel // 2)
        self.aux_head = nn.Linear(hidden, n_aux_clusters)

    def forward(
        self,
        frames: torch.Tensor,  # (T, input_dim), already noise-perturbed if training
        training: bool = True,
        masks: dict[str, torch.Tensor] | None = None,
        generator=None,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Returns (phoneme logits (T, C), auxiliary cluster logits (T, K))."""
        x = standardize(frames)
        x = apply_dropout(
            x, self.input_dropout, training, (masks or {}).get("input"), generator
        )
        h = F.gelu(self.conv_in(x.t().unsqueeze(0))).squeeze(0).t()
        h = apply_dropout(
            h, self.hidden_dropout, training, (masks or {}).get("hidden"), generator
        )
        logits = self.conv_out(h.t().unsqueeze(0)).squeeze(0).t()
        return logits, self.aux_head(h)


class SequenceDiscriminator(nn.Module):
    """Scores a (T, C) sequence of phoneme distributions as real text."""

    def __init__(self, n_classes: int, hidden: int = 64, kernel: int = 3):
        super().__init__()
        self.arch = dict(n_classes=n_classes, hidden=hidden, kernel=kernel)
        self.conv1 = nn.Conv1d(n_classes, hidden, kernel, padding=kernel // 2)
        self.conv2 = nn.Conv1d(hidden, hidden, kernel, padding=kernel // 2)
        self.head = nn.Linear(hidden, 1)

    def forward(self, dist: torch.Tensor) -> torch.Tensor:
        h = dist.t().unsqueeze(0)
        h = F.gelu(self.conv1(h))
        h = F.gelu(self.conv2(h))
        return self.head(h.squeeze(0).t().mean(dim=0)).squeeze(-1)


def select_run_representatives(
    logits: torch.Tensor, mode: str = "first", generator=None
) -> torch.Tensor:
    """One frame index per run of equal argmax labels.

    mode "first" is deterministic (decoding); "random" samples within each
    run (training, following the merge-and-sample construction).
    """
    am = logits.argmax(dim=-1)
    idx = []
    start = 0
    for t in range(1, len(am) + 1):
        if t == len(am) or am[t] != am[start]:
            if mode == "random":
                offset = int(torch.randint(start, t, (1,), generator=generator))
            else:
                offset = start
            idx.append(offset)
            start = t
    return torch.tensor(idx, dtype=torch.long)
