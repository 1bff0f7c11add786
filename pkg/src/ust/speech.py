"""Speech-encoder surrogate and its unsupervised adaptation.

The encoder is a stack of same-width temporal convolutions with tanh
activations (no subsampling), standing in for a pretrained speech model.
Adaptation fine-tunes the whole stack with a CTC objective against merged
k-means labels of its own initial representations, then discards the
projection head.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .data import CorpusManifest
from .guard import training_guard
from .kmeans import Codebook, assign_labels, kmeans_fit, merge_consecutive


class SpeechEncoder(nn.Module):
    """Frame-to-frame convolutional trunk; every layer keeps (T, dim)."""

    def __init__(self, feature_dim: int, n_layers: int = 3, kernel: int = 3):
        super().__init__()
        if n_layers < 1:
            raise ValueError("need at least one layer")
        self.feature_dim = feature_dim
        self.arch = dict(feature_dim=feature_dim, n_layers=n_layers, kernel=kernel)
        self.layers = nn.ModuleList(
            nn.Conv1d(feature_dim, feature_dim, kernel, padding=kernel // 2)
            for _ in range(n_layers)
        )

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def layer_outputs(self, frames: torch.Tensor) -> list[torch.Tensor]:
        # frames: (T, dim) -> list of per-layer (T, dim)
        h = frames.t().unsqueeze(0)  # (1, dim, T)
        outs = []
        for conv in self.layers:
            h = torch.tanh(conv(h))
            outs.append(h.squeeze(0).t())
        return outs

    def extract(self, frames: torch.Tensor, layer: int) -> torch.Tensor:
        """Representation of 1-based `layer`; frame count preserved."""
        if not 1 <= layer <= self.n_layers:
            raise ValueError(f"extract layer {layer} outside 1..{self.n_layers}")
        return self.layer_outputs(frames)[layer - 1]


def extract_corpus(
    encoder: SpeechEncoder, feats: list[np.ndarray], layer: int
) -> list[np.ndarray]:
    out = []
    with torch.no_grad():
        for f in feats:
            rep = encoder.extract(torch.from_numpy(np.asarray(f, dtype=np.float32)), layer)
            out.append(rep.numpy().astype(np.float32))
    return out


@dataclass
class AdaptConfig:
    kmeans_clusters: int = 128
    kmeans_iters: int = 30
    extract_layer: int = 2  # penultimate of the default 3-layer trunk
    steps: int = 600
    batch_size: int = 8
    lr: float = 1e-3
    freeze_steps: int = 0  # trunk frozen for the first N steps (0 = never)
    holdout: int = 8  # utterances reserved for the CTC loss curve
    seed: int = 0


@dataclass
class AdaptResult:
    encoder: SpeechEncoder
    codebook: Codebook
    ctc_curve: list[float] = field(default_factory=list)
    holdout_curve: list[float] = field(default_factory=list)


def _ctc_loss(head: nn.Linear, rep: torch.Tensor, labels: list[int]) -> torch.Tensor:
    logp = F.log_softmax(head(rep), dim=-1)  # (T, K+1), blank = 0
    return F.ctc_loss(
        logp.unsqueeze(1),
        torch.tensor(labels, dtype=torch.long).unsqueeze(0),
        torch.tensor([logp.shape[0]]),
        torch.tensor([len(labels)]),
        blank=0,
        zero_infinity=True,
    )


def adapt_encoder(
    encoder: SpeechEncoder, speech: CorpusManifest, k: int, cfg: AdaptConfig
) -> AdaptResult:
    """Unsupervised in-domain adaptation: k-means labels + CTC fine-tuning.

    Labels come from the incoming encoder's `extract_layer` output, are
    merged over consecutive duplicates, and supervise a fresh (K+1)-class
    projection; the projection is discarded from the returned encoder.
    Uses only features; text and gold fields are never touched.
    """
    with training_guard("adapt"):
        torch.manual_seed(cfg.seed)
        feats = speech.load_all()
        reps0 = extract_corpus(encoder, feats, cfg.extract_layer)
        all_frames = np.concatenate(reps0, axis=0)
        codebook = kmeans_fit(all_frames, k, seed=cfg.seed, max_iter=cfg.kmeans_iters)
        targets = [
            merge_consecutive(assign_labels(r, codebook)).labels for r in reps0
        ]

        model = copy.deepcopy(encoder)
        head = nn.Linear(model.feature_dim, k + 1)
        params = list(model.parameters()) + list(head.parameters())
        opt = torch.optim.Adam(params, lr=cfg.lr)

        n = len(feats)
        holdout = min(cfg.holdout, max(0, n - cfg.batch_size))
        train_idx = list(range(holdout, n))
        rng = np.random.default_rng(cfg.seed)

        def holdout_loss() -> float:
            if holdout == 0:
                return float("nan")
            with torch.no_grad():
                vals = []
                for i in range(holdout):
                    rep = model.extract(torch.from_numpy(feats[i]), model.n_layers)
                    vals.append(float(_ctc_loss(head, rep, targets[i])))
            return float(np.mean(vals))

        curve: list[float] = []
        holdout_curve: list[float] = [holdout_loss()]
        for step in range(cfg.steps):
            trunk_frozen = step < cfg.freeze_steps
            for p in model.parameters():
                p.requires_grad_(not trunk_frozen)
            batch = rng.choice(train_idx, size=min(cfg.batch_size, len(train_idx)), replace=False)
            opt.zero_grad()
            loss = torch.tensor(0.0)
            for i in batch:
                rep = model.extract(torch.from_numpy(feats[i]), model.n_layers)
                loss = loss + _ctc_loss(head, rep, targets[i])
            loss = loss / len(batch)
            loss.backward()
            opt.step()
            curve.append(float(loss.detach()))
        holdout_curve.append(holdout_loss())
        for p in model.parameters():
            p.requires_grad_(True)
        # projection head is dropped here: output dim equals the input encoder's
        return AdaptResult(encoder=model, codebook=codebook, ctc_curve=curve, holdout_curve=holdout_curve)
