"""Unsupervised text de-normalization (normalized -> raw written form).

Training pairs are synthesized from raw monolingual text by normalizing
it; no human-labeled pairs exist anywhere in the path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from ..errors import NonFiniteLossError
from ..guard import training_guard
from ..textnorm import normalize_text
from ..vocab import EOS, Vocab
from .model import ToySeq2Seq, beam_decode, build_text_vocab, encode_line, decode_ids, lang_tag, pad_batch

NORM = "norm"
RAW = "raw"


@dataclass
class TdnConfig:
    d_model: int = 96
    nhead: int = 4
    layers: int = 2
    ffn: int = 192
    dropout: float = 0.1
    batch_size: int = 16
    lr: float = 7e-4
    steps: int = 1200
    holdout: int = 16
    seed: int = 0


@dataclass
class TdnModel:
    seq2seq: ToySeq2Seq
    vocab: Vocab
    curves: dict[str, list[float]] = field(default_factory=dict)

    def state_modules(self):
        return {"seq2seq": self.seq2seq}


def tdn_pairs(raw_lines: list[str]) -> list[tuple[str, str]]:
    """(normalized -> raw) pairs; normalize_text(target) == source always."""
    return [(normalize_text(line), line) for line in raw_lines]


def train_tdn(raw_lines: list[str], cfg: TdnConfig) -> TdnModel:
    with training_guard("train-tdn"):
        torch.manual_seed(cfg.seed)
        pairs = tdn_pairs(raw_lines)
        vocab, _ = build_text_vocab({NORM: [p[0] for p in pairs], RAW: [p[1] for p in pairs]})
        model = ToySeq2Seq(
            len(vocab), d_model=cfg.d_model, nhead=cfg.nhead, num_layers=cfg.layers,
            ffn=cfg.ffn, dropout=cfg.dropout,
        )
        rows = [
            (encode_line(norm, vocab), encode_line(raw, vocab)) for norm, raw in pairs
        ]
        holdout = min(cfg.holdout, max(0, len(rows) - 1))
        train_rows = rows[holdout:]
        norm_tag, raw_tag = vocab.id(lang_tag(NORM)), vocab.id(lang_tag(RAW))
        opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
        rng = np.random.default_rng(cfg.seed)

        def batch_loss(items) -> torch.Tensor:
            src = pad_batch([[norm_tag] + s + [EOS] for s, _ in items])
            tin = pad_batch([[raw_tag] + t for _, t in items])
            tout = pad_batch([t + [EOS] for _, t in items])
            return model.loss(src, tin, tout)

        curves: dict[str, list[float]] = {"tdn_loss": []}
        model.train()
        for _ in range(cfg.steps):
            idx = rng.choice(len(train_rows), size=min(cfg.batch_size, len(train_rows)), replace=False)
            loss = batch_loss([train_rows[i] for i in idx])
            if not torch.isfinite(loss):
                raise NonFiniteLossError("tdn_cross_entropy")
            opt.zero_grad()
            loss.backward()
            opt.step()
            curves["tdn_loss"].append(float(loss.detach()))
        if holdout:
            model.eval()
            with torch.no_grad():
                curves["tdn_valid"] = [float(batch_loss(rows[:holdout]))]
        return TdnModel(seq2seq=model, vocab=vocab, curves=curves)


def denormalize(tdn: TdnModel, normalized_text: str, max_len: int = 32) -> str:
    """Beam-1 decode of the written form; "" stays ""."""
    if not normalized_text.strip():
        return ""
    vocab = tdn.vocab
    src = [vocab.id(lang_tag(NORM))] + encode_line(normalized_text, vocab) + [EOS]
    results = beam_decode(tdn.seq2seq, src, vocab.id(lang_tag(RAW)), beam=1, nbest=1, max_len=max_len)
    return decode_ids(results[0][0], vocab) if results else ""
