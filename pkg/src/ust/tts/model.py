"""Autoregressive phoneme-to-frame synthesis model.

Phoneme encoder feeds a causal frame decoder through cross-attention; the
decoder predicts the next frame and a per-step stop probability. Prenet
dropout masks can be injected for deterministic gradient checking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..uasr.models import apply_dropout
from ..umt.model import sinusoidal_positions


@dataclass
class SynthesisConfig:
    max_frames: int = 400
    stop_threshold: float = 0.5
    alpha_consistency: float = 1.0

    def __post_init__(self):
        if self.max_frames < 1:
            raise ValueError("max_frames >= 1")


@dataclass
class SynthesisResult:
    frames: np.ndarray  # (T, frame_dim)
    stop_step: int  # frame index at which the stop fired (or max_frames - 1)
    stopped: bool  # False when the max_frames safety net truncated


class TtsModel(nn.Module):
    def __init__(
        self,
        phoneme_vocab_size: int,
        frame_dim: int,
        d_model: int = 96,
        nhead: int = 4,
        layers: int = 2,
        ffn: int = 192,
        dropout: float = 0.1,
        prenet_dropout: float = 0.3,
        max_len: int = 512,
    ):
        super().__init__()
        self.frame_dim = frame_dim
        self.d_model = d_model
        self.prenet_dropout = prenet_dropout
        self.arch = dict(
            phoneme_vocab_size=phoneme_vocab_size, frame_dim=frame_dim, d_model=d_model,
            nhead=nhead, layers=layers, ffn=ffn, dropout=dropout,
            prenet_dropout=prenet_dropout, max_len=max_len,
        )
        self.ph_emb = nn.Embedding(phoneme_vocab_size, d_model)
        nn.init.normal_(self.ph_emb.weight, mean=0.0, std=d_model**-0.5)
        self.register_buffer("pos", sinusoidal_positions(max_len, d_model), persistent=False)
        enc_layer = nn.TransformerEncoderLayer(d_model, nhead, ffn, dropout, batch_first=True, norm_first=True)
        dec_layer = nn.TransformerDecoderLayer(d_model, nhead, ffn, dropout, batch_first=True, norm_first=True)
        self.encoder = nn.TransformerEncoder(enc_layer, layers, enable_nested_tensor=False)
        self.decoder = nn.TransformerDecoder(dec_layer, layers)
        self.prenet1 = nn.Linear(frame_dim, d_model)
        self.prenet2 = nn.Linear(d_model, d_model)
        self.frame_out = nn.Linear(d_model, frame_dim)
        self.stop_out = nn.Linear(d_model, 1)

    def encode(self, phonemes: torch.Tensor) -> torch.Tensor:
        x = self.ph_emb(phonemes).unsqueeze(0) * math.sqrt(self.d_model) + self.pos[: phonemes.shape[0]]
        return self.encoder(x)

    def _prenet(self, frames: torch.Tensor, masks: dict | None, training: bool) -> torch.Tensor:
        h = F.relu(self.prenet1(frames))
        h = apply_dropout(h, self.prenet_dropout, training, (masks or {}).get("prenet1"))
        h = F.relu(self.prenet2(h))
        h = apply_dropout(h, self.prenet_dropout, training, (masks or {}).get("prenet2"))
        return h

    def decode_frames(
        self,
        memory: torch.Tensor,
        frame_inputs: torch.Tensor,  # (T, frame_dim): zero frame then y_0..y_{T-2}
        masks: dict | None = None,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Teacher-forced pass: (predicted frames (T, F), stop logits (T,))."""
        t = frame_inputs.shape[0]
        h = self._prenet(frame_inputs, masks, self.training).unsqueeze(0) + self.pos[:t]
        causal = nn.Transformer.generate_square_subsequent_mask(t)
        dec = self.decoder(h, memory, tgt_mask=causal).squeeze(0)
        return self.frame_out(dec), self.stop_out(dec).squeeze(-1)

    def teacher_inputs(self, target_frames: torch.Tensor) -> torch.Tensor:
        zero = torch.zeros(1, self.frame_dim, dtype=target_frames.dtype)
        return torch.cat([zero, target_frames[:-1]], dim=0)


@torch.no_grad()
def synthesize(model: TtsModel, phonemes: list[int], cfg: SynthesisConfig) -> SynthesisResult:
    """Emit frames until the stop probability exceeds the threshold or the
    max_frames safety net; always returns at least one frame."""
    if len(phonemes) == 0:
        raise ValueError("synthesize needs at least one phoneme")
    was_training = model.training
    model.eval()
    memory = model.encode(torch.tensor(phonemes, dtype=torch.long))
    frames: list[torch.Tensor] = []
    stop_step, stopped = cfg.max_frames - 1, False
    for t in range(cfg.max_frames):
        inputs = torch.zeros(1, model.frame_dim) if not frames else torch.cat(
            [torch.zeros(1, model.frame_dim), torch.stack(frames)], dim=0
        )
        pred, stop_logits = model.decode_frames(memory, inputs)
        frames.append(pred[-1])
        if torch.sigmoid(stop_logits[-1]) > cfg.stop_threshold:
            stop_step, stopped = t, True
            break
    if was_training:
        model.train()
    return SynthesisResult(
        frames=torch.stack(frames).numpy().astype(np.float32),
        stop_step=stop_step,
        stopped=stopped,
    )
