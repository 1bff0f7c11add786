"""CTC self-training on teacher-decoded pseudo-phonemes."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..guard import training_guard
from ..kmeans import merge_runs
from ..speech import SpeechEncoder
from ..textnorm import Lexicon
from ..vocab import Vocab
from .decode import phonemes_to_words


@dataclass
class SelfTrainConfig:
    steps: int = 1200
    batch_size: int = 8
    lr: float = 1e-3
    holdout: int = 8
    seed: int = 0


class CtcAsrModel(nn.Module):
    """Adapted encoder trunk + CTC head over {blank} + phoneme inventory."""

    def __init__(self, encoder: SpeechEncoder, phoneme_vocab: Vocab, extract_layer: int | None = None):
        super().__init__()
        self.encoder = encoder
        self.phoneme_vocab = phoneme_vocab
        self.extract_layer = extract_layer or encoder.n_layers
        self.phoneme_ids = tuple(phoneme_vocab.content_ids)  # CTC class i+1
        self.head = nn.Linear(encoder.feature_dim, len(self.phoneme_ids) + 1)

    def log_probs(self, feats: torch.Tensor) -> torch.Tensor:
        rep = self.encoder.extract(feats, self.extract_layer)
        return F.log_softmax(self.head(rep), dim=-1)

    def ctc_loss(self, feats: torch.Tensor, phonemes: list[int]) -> torch.Tensor:
        labels = [self.phoneme_ids.index(p) + 1 for p in phonemes]
        logp = self.log_probs(feats)
        return F.ctc_loss(
            logp.unsqueeze(1),
            torch.tensor(labels, dtype=torch.long).unsqueeze(0),
            torch.tensor([logp.shape[0]]),
            torch.tensor([len(labels)]),
            blank=0,
            zero_infinity=True,
        )

    def decode_phoneme_ids(self, feats) -> list[int]:
        """Greedy CTC decode: argmax, collapse runs, drop blanks."""
        if isinstance(feats, np.ndarray):
            feats = torch.from_numpy(feats.astype(np.float32))
        if feats.shape[0] == 0:
            return []
        with torch.no_grad():
            am = self.log_probs(feats).argmax(dim=-1).tolist()
        return [self.phoneme_ids[c - 1] for c in merge_runs(am) if c != 0]

    def transcribe(
        self, feats, lexicon: Lexicon, word_lm=None, beam: int = 8,
        lm_weight: float = 1.0, word_score: float = -0.5,
    ) -> str:
        result = phonemes_to_words(
            self.decode_phoneme_ids(feats), lexicon, self.phoneme_vocab,
            word_lm=word_lm, beam=beam, lm_weight=lm_weight, word_score=word_score,
        )
        return " ".join(result.words)


@dataclass
class SelfTrainResult:
    model: CtcAsrModel
    skipped_empty: int
    skipped_too_long: int
    train_curve: list[float] = field(default_factory=list)
    holdout_curve: list[float] = field(default_factory=list)


def self_train_ctc(
    encoder: SpeechEncoder,
    speech_feats: list[np.ndarray],
    pseudo_phonemes: list[list[int]],
    phoneme_vocab: Vocab,
    cfg: SelfTrainConfig,
) -> SelfTrainResult:
    """Fine-tune the encoder + a CTC head on decoded pseudo-labels.

    Utterances with empty pseudo-labels, or labels longer than their frame
    count (CTC-infeasible), are skipped and counted.
    """
    with training_guard("self-train"):
        torch.manual_seed(cfg.seed)
        model = CtcAsrModel(copy.deepcopy(encoder), phoneme_vocab)
        usable, skipped_empty, skipped_long = [], 0, 0
        for feats, phons in zip(speech_feats, pseudo_phonemes):
            if len(phons) == 0:
                skipped_empty += 1
            elif len(phons) > feats.shape[0]:
                skipped_long += 1
            else:
                usable.append((torch.from_numpy(feats.astype(np.float32)), phons))
        if not usable:
            raise ValueError("no usable pseudo-labeled utterances")

        holdout = min(cfg.holdout, max(0, len(usable) - cfg.batch_size))
        train_items = usable[holdout:]
        opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
        rng = np.random.default_rng(cfg.seed)

        def holdout_loss() -> float:
            if holdout == 0:
                return float("nan")
            with torch.no_grad():
                return float(np.mean([float(model.ctc_loss(f, p)) for f, p in usable[:holdout]]))

        curve: list[float] = []
        holdout_curve = [holdout_loss()]
        for _ in range(cfg.steps):
            batch = rng.choice(len(train_items), size=min(cfg.batch_size, len(train_items)), replace=False)
            opt.zero_grad()
            loss = torch.stack([model.ctc_loss(*train_items[i]) for i in batch]).mean()
            loss.backward()
            opt.step()
            curve.append(float(loss.detach()))
        holdout_curve.append(holdout_loss())
        return SelfTrainResult(
            model=model, skipped_empty=skipped_empty, skipped_too_long=skipped_long,
            train_curve=curve, holdout_curve=holdout_curve,
        )
