"""TTS training: frame regression + stop prediction + EOS consistency."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from ..checkpoints import Checkpoint, average_checkpoints, module_to_params, params_into_module, select_checkpoints
from ..errors import NonFiniteLossError, ShapeMismatchError
from ..guard import training_guard
from .model import TtsModel


def eos_consistency_loss(p1, p2) -> torch.Tensor:
    """L1 distance between two stop-probability sequences (sum of |diff|)."""
    t1 = torch.as_tensor(p1)
    t2 = torch.as_tensor(p2)
    if t1.shape != t2.shape:
        raise ShapeMismatchError(f"{tuple(t1.shape)} vs {tuple(t2.shape)}")
    return (t1 - t2).abs().sum()


@dataclass
class TtsTrainConfig:
    d_model: int = 96
    nhead: int = 4
    layers: int = 2
    ffn: int = 192
    dropout: float = 0.1
    prenet_dropout: float = 0.3
    alpha_consistency: float = 1.0
    stop_pos_weight: float = 5.0
    steps: int = 1500
    batch_size: int = 8
    lr: float = 7e-4
    ckpt_interval: int = 150
    average_last: int = 5
    holdout: int = 8
    seed: int = 0


def tts_utterance_loss(
    model: TtsModel,
    phonemes: torch.Tensor,
    frames: torch.Tensor,
    alpha: float,
    stop_pos_weight: float,
    masks1: dict | None = None,
    masks2: dict | None = None,
) -> tuple[torch.Tensor, dict[str, float]]:
    """Frame L1 + stop BCE + alpha * L_c over two dropout-masked passes.

    Both passes share the input and teacher forcing; only dropout differs.
    """
    memory = model.encode(phonemes)
    inputs = model.teacher_inputs(frames)
    pred1, stop_logits1 = model.decode_frames(memory, inputs, masks=masks1)
    stop_target = torch.zeros(frames.shape[0])
    stop_target[-1] = 1.0
    frame_l1 = (pred1 - frames).abs().mean()
    stop_bce = F.binary_cross_entropy_with_logits(
        stop_logits1, stop_target, pos_weight=torch.tensor(stop_pos_weight)
    )
    if alpha > 0:
        _, stop_logits2 = model.decode_frames(memory, inputs, masks=masks2)
        l_c = eos_consistency_loss(torch.sigmoid(stop_logits1), torch.sigmoid(stop_logits2))
    else:
        l_c = torch.zeros(())
    total = frame_l1 + stop_bce + alpha * l_c
    return total, {"frame_l1": float(frame_l1), "stop_bce": float(stop_bce), "eos_consistency": float(l_c)}


@dataclass
class TtsTrainResult:
    model: TtsModel
    curves: dict[str, list[float]] = field(default_factory=dict)


def train_tts(
    pairs: list[tuple[list[int], np.ndarray]],
    phoneme_vocab_size: int,
    frame_dim: int,
    cfg: TtsTrainConfig,
) -> TtsTrainResult:
    """Train on (phoneme ids, frame matrix) pairs; averages the last
    `average_last` snapshots into the returned model."""
    if not pairs:
        raise ValueError("no training pairs")
    with training_guard("train-tts"):
        torch.manual_seed(cfg.seed)
        model = TtsModel(
            phoneme_vocab_size, frame_dim, d_model=cfg.d_model, nhead=cfg.nhead,
            layers=cfg.layers, ffn=cfg.ffn, dropout=cfg.dropout, prenet_dropout=cfg.prenet_dropout,
        )
        items = [
            (torch.tensor(p, dtype=torch.long), torch.from_numpy(f.astype(np.float32)))
            for p, f in pairs
            if len(p) > 0 and f.shape[0] > 0
        ]
        holdout = min(cfg.holdout, max(0, len(items) - 1))
        train_items = items[holdout:]
        opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
        rng = np.random.default_rng(cfg.seed)

        def valid_loss() -> float:
            if holdout == 0:
                return float("nan")
            model.eval()
            with torch.no_grad():
                vals = [
                    float(tts_utterance_loss(model, p, f, 0.0, cfg.stop_pos_weight)[0])
                    for p, f in items[:holdout]
                ]
            model.train()
            return float(np.mean(vals))

        curves: dict[str, list[float]] = {"tts_loss": [], "tts_valid": [valid_loss()]}
        history: list[Checkpoint] = []
        model.train()
        for step in range(cfg.steps):
            idx = rng.choice(len(train_items), size=min(cfg.batch_size, len(train_items)), replace=False)
            opt.zero_grad()
            total = torch.zeros(())
            for i in idx:
                p, f = train_items[i]
                loss, _ = tts_utterance_loss(
                    model, p, f, cfg.alpha_consistency, cfg.stop_pos_weight
                )
                total = total + loss
            total = total / len(idx)
            if not torch.isfinite(total):
                raise NonFiniteLossError("tts_total")
            total.backward()
            opt.step()
            curves["tts_loss"].append(float(total.detach()))
            if (step + 1) % cfg.ckpt_interval == 0:
                history.append(Checkpoint(params=module_to_params(model), step=step + 1, seed=cfg.seed))
        if not history:
            history.append(Checkpoint(params=module_to_params(model), step=cfg.steps, seed=cfg.seed))
        last = select_checkpoints(history, "last_k", cfg.average_last)
        params_into_module(model, average_checkpoints(last).params)
        curves["tts_valid"].append(valid_loss())
        return TtsTrainResult(model=model, curves=curves)
