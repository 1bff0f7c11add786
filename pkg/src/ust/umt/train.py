"""Denoising pretraining and bidirectional online back-translation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from ..checkpoints import Checkpoint, average_checkpoints, module_to_params, params_into_module, select_checkpoints
from ..errors import NonFiniteLossError
from ..guard import training_guard
from ..vocab import EOS, Vocab
from .model import ToySeq2Seq, build_text_vocab, encode_line, greedy_decode, lang_tag, pad_batch
from .noise import NoiseConfig, dae_noise


@dataclass
class ObtSchedule:
    vocab_mask_frac: float = 0.99
    vocab_mask_steps: int = 500
    total_steps: int = 2000

    def __post_init__(self):
        if not 0.0 <= self.vocab_mask_frac <= 1.0:
            raise ValueError("vocab_mask_frac in [0, 1]")
        if self.vocab_mask_steps > self.total_steps:
            raise ValueError("vocab_mask_steps <= total_steps")

    def mask_active(self, step: int) -> bool:
        """True during the first vocab_mask_steps updates (0-based step)."""
        return step < self.vocab_mask_steps


@dataclass
class UmtConfig:
    d_model: int = 96
    nhead: int = 4
    layers: int = 2
    ffn: int = 192
    dropout: float = 0.1
    batch_size: int = 16
    lr: float = 7e-4
    dae_steps: int = 2000
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    schedule: ObtSchedule = field(default_factory=ObtSchedule)
    ckpt_interval: int = 200
    average_last: int = 5
    bt_max_len: int = 24
    holdout: int = 16
    seed: int = 0


def _check_finite(loss: torch.Tensor, name: str) -> None:
    if not torch.isfinite(loss).all():
        raise NonFiniteLossError(name)


def allowed_token_mask(vocab: Vocab, freq, frac: float) -> torch.Tensor:
    """Decoder mask: eos + language tags + the most frequent (1 - frac)
    share of content tokens (frequency ranked, ties by symbol)."""
    allowed = torch.zeros(len(vocab), dtype=torch.bool)
    allowed[EOS] = True
    content = []
    for idx in vocab.content_ids:
        sym = vocab.symbol(idx)
        if sym.startswith("<lang:"):
            allowed[idx] = True
        else:
            content.append((-(freq.get(sym, 0)), sym, idx))
    keep = int(np.ceil((1.0 - frac) * len(content)))
    for _, _, idx in sorted(content)[: max(keep, 1)]:
        allowed[idx] = True
    return allowed


class UmtCorpus:
    """Tokenized monolingual corpora for the two languages."""

    def __init__(self, corpora: dict[str, list[str]], holdout: int = 16):
        self.vocab, self.freq = build_text_vocab(corpora)
        self.langs = sorted(corpora)
        self.train: dict[str, list[list[int]]] = {}
        self.valid: dict[str, list[list[int]]] = {}
        for lang, lines in corpora.items():
            rows = [encode_line(line, self.vocab) for line in lines]
            h = min(holdout, max(0, len(rows) - 1))
            self.valid[lang] = rows[:h]
            self.train[lang] = rows[h:]

    def tag(self, lang: str) -> int:
        return self.vocab.id(lang_tag(lang))


def _dae_batch(corpus: UmtCorpus, lang: str, rows: list[list[int]], cfg: UmtConfig, rng):
    src_rows, tgt_in_rows, tgt_out_rows = [], [], []
    tag = corpus.tag(lang)
    for row in rows:
        noised = dae_noise(row, cfg.noise, rng, corpus.vocab)
        src_rows.append([tag] + noised + [EOS])
        tgt_in_rows.append([tag] + row)
        tgt_out_rows.append(row + [EOS])
    return pad_batch(src_rows), pad_batch(tgt_in_rows), pad_batch(tgt_out_rows)


def dae_valid_loss(model: ToySeq2Seq, corpus: UmtCorpus, cfg: UmtConfig, seed: int = 123) -> float:
    rng = np.random.default_rng(seed)
    model.eval()
    losses = []
    with torch.no_grad():
        for lang in corpus.langs:
            if not corpus.valid[lang]:
                continue
            src, tin, tout = _dae_batch(corpus, lang, corpus.valid[lang], cfg, rng)
            losses.append(float(model.loss(src, tin, tout)))
    model.train()
    return float(np.mean(losses))


def pretrain_dae(
    model: ToySeq2Seq, corpus: UmtCorpus, cfg: UmtConfig
) -> dict[str, list[float]]:
    """Reconstruct originals from corrupted inputs, both languages mixed."""
    with training_guard("train-umt/dae"):
        torch.manual_seed(cfg.seed)
        rng = np.random.default_rng(cfg.seed)
        opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
        curves: dict[str, list[float]] = {"dae_loss": [], "dae_valid": [dae_valid_loss(model, corpus, cfg)]}
        model.train()
        for step in range(cfg.dae_steps):
            lang = corpus.langs[step % len(corpus.langs)]
            rows_all = corpus.train[lang]
            idx = rng.choice(len(rows_all), size=min(cfg.batch_size, len(rows_all)), replace=False)
            src, tin, tout = _dae_batch(corpus, lang, [rows_all[i] for i in idx], cfg, rng)
            loss = model.loss(src, tin, tout)
            _check_finite(loss, "dae_reconstruction")
            opt.zero_grad()
            loss.backward()
            opt.step()
            curves["dae_loss"].append(float(loss.detach()))
        curves["dae_valid"].append(dae_valid_loss(model, corpus, cfg))
        return curves


def train_obt(
    model: ToySeq2Seq, corpus: UmtCorpus, cfg: UmtConfig
) -> dict[str, list[float]]:
    """Bidirectional online back-translation from a DAE checkpoint.

    Each update: for each direction, greedy-translate a monolingual batch
    with the current model (top-(1-frac) vocabulary during warmup), then
    one supervised step on (translation -> original). Ends by averaging
    the last `average_last` snapshots into the model.
    """
    if len(corpus.langs) != 2:
        raise ValueError("OBT needs exactly two languages")
    with training_guard("train-obt"):
        torch.manual_seed(cfg.seed + 1)
        rng = np.random.default_rng(cfg.seed + 1)
        opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
        allowed = allowed_token_mask(corpus.vocab, corpus.freq, cfg.schedule.vocab_mask_frac)
        curves: dict[str, list[float]] = {"obt_loss": []}
        history: list[Checkpoint] = []
        a, b = corpus.langs
        for step in range(cfg.schedule.total_steps):
            mask = allowed if cfg.schedule.mask_active(step) else None
            step_losses = []
            for src_lang, tgt_lang in ((a, b), (b, a)):
                rows_all = corpus.train[src_lang]
                idx = rng.choice(len(rows_all), size=min(cfg.batch_size, len(rows_all)), replace=False)
                rows = [rows_all[i] for i in idx]
                src_tag, tgt_tag = corpus.tag(src_lang), corpus.tag(tgt_lang)
                enc_rows = [[src_tag] + r + [EOS] for r in rows]
                translations = greedy_decode(
                    model, enc_rows, tgt_tag, max_len=cfg.bt_max_len, allowed=mask
                )
                model.train()
                bt_src = pad_batch([[tgt_tag] + t + [EOS] for t in translations])
                tin = pad_batch([[src_tag] + r for r in rows])
                tout = pad_batch([r + [EOS] for r in rows])
                loss = model.loss(bt_src, tin, tout)
                _check_finite(loss, f"obt_{src_lang}->{tgt_lang}")
                opt.zero_grad()
                loss.backward()
                opt.step()
                step_losses.append(float(loss.detach()))
            curves["obt_loss"].append(float(np.mean(step_losses)))
            if (step + 1) % cfg.ckpt_interval == 0:
                history.append(Checkpoint(params=module_to_params(model), step=step + 1, seed=cfg.seed))
        if not history:
            history.append(Checkpoint(params=module_to_params(model), step=cfg.schedule.total_steps, seed=cfg.seed))
        last = select_checkpoints(history, "last_k", cfg.average_last)
        params_into_module(model, average_checkpoints(last).params)
        return curves
