"""End-to-end students trained on pseudo-labels.

StudentS2TT: speech trunk + adapter feeding a text decoder; encoder comes
from the self-trained ASR encoder, decoder and embeddings from the
unsupervised MT model. StudentS2ST adds a bridge encoder over the text
decoder's states and an autoregressive frame decoder.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..checkpoints import Checkpoint, average_checkpoints, module_to_params, params_into_module, select_checkpoints
from ..errors import NonFiniteLossError
from ..guard import training_guard
from ..speech import SpeechEncoder
from ..umt.model import ToySeq2Seq, sinusoidal_positions
from ..vocab import EOS, PAD, Vocab
from .pseudo import PseudoPair


@dataclass
class StudentConfig:
    d_model: int = 96
    nhead: int = 4
    layers: int = 2
    ffn: int = 192
    dropout: float = 0.1
    bridge_layers: int = 1
    prenet_dropout: float = 0.2
    stop_pos_weight: float = 5.0
    steps: int = 1500
    batch_size: int = 8
    lr: float = 5e-4
    ckpt_interval: int = 150
    average_best: int = 5
    max_text_len: int = 24
    seed: int = 0


class StudentS2TT(nn.Module):
    def __init__(
        self, encoder: SpeechEncoder, extract_layer: int, vocab: Vocab, cfg: StudentConfig, max_len: int = 512
    ):
        super().__init__()
        self.encoder = encoder
        self.extract_layer = extract_layer
        self.vocab_size = len(vocab)
        self.d_model = cfg.d_model
        self.adapter = nn.Linear(encoder.feature_dim, cfg.d_model)
        self.emb = nn.Embedding(self.vocab_size, cfg.d_model, padding_idx=PAD)
        self.register_buffer("pos", sinusoidal_positions(max_len, cfg.d_model), persistent=False)
        dec_layer = nn.TransformerDecoderLayer(
            cfg.d_model, cfg.nhead, cfg.ffn, cfg.dropout, batch_first=True, norm_first=True
        )
        self.decoder = nn.TransformerDecoder(dec_layer, cfg.layers)
        self.out = nn.Linear(cfg.d_model, self.vocab_size, bias=False)
        self.out.weight = self.emb.weight
        self.init_provenance: dict[str, str] = {"encoder": "random", "decoder": "random"}

    def init_encoder_from(self, encoder: SpeechEncoder, name: str) -> None:
        self.encoder.load_state_dict(copy.deepcopy(encoder.state_dict()))
        self.init_provenance["encoder"] = name

    def init_decoder_from(self, mt: ToySeq2Seq, name: str) -> None:
        self.decoder.load_state_dict(copy.deepcopy(mt.decoder.state_dict()))
        self.emb.load_state_dict(copy.deepcopy(mt.emb.state_dict()))
        self.init_provenance["decoder"] = name

    def encode_speech(self, feats: torch.Tensor) -> torch.Tensor:
        rep = self.encoder.extract(feats, self.extract_layer)
        return (self.adapter(rep) + self.pos[: rep.shape[0]]).unsqueeze(0)

    def _decode_hidden(self, memory: torch.Tensor, tgt_in: torch.Tensor) -> torch.Tensor:
        x = self.emb(tgt_in) * math.sqrt(self.d_model) + self.pos[: tgt_in.shape[1]]
        causal = nn.Transformer.generate_square_subsequent_mask(tgt_in.shape[1])
        return self.decoder(x, memory, tgt_mask=causal)

    def loss(self, feats: torch.Tensor, start_id: int, target_ids: list[int]) -> torch.Tensor:
        memory = self.encode_speech(feats)
        tgt_in = torch.tensor([[start_id] + target_ids], dtype=torch.long)
        tgt_out = torch.tensor([target_ids + [EOS]], dtype=torch.long)
        logits = self.out(self._decode_hidden(memory, tgt_in))
        return F.cross_entropy(logits.reshape(-1, self.vocab_size), tgt_out.reshape(-1))

    @torch.no_grad()
    def translate_speech(self, feats: torch.Tensor, start_id: int, max_len: int = 24) -> list[int]:
        self.eval()
        memory = self.encode_speech(feats)
        seq = [start_id]
        for _ in range(max_len):
            hidden = self._decode_hidden(memory, torch.tensor([seq], dtype=torch.long))
            nxt = int(self.out(hidden[0, -1]).argmax())
            if nxt == EOS:
                break
            seq.append(nxt)
        return seq[1:]


class StudentS2ST(StudentS2TT):
    """Four-stage topology: speech encoder, text decoder, bridge encoder,
    autoregressive frame decoder."""

    def __init__(
        self,
        encoder: SpeechEncoder,
        extract_layer: int,
        vocab: Vocab,
        frame_dim: int,
        cfg: StudentConfig,
        max_len: int = 512,
    ):
        super().__init__(encoder, extract_layer, vocab, cfg, max_len=max_len)
        self.frame_dim = frame_dim
        self.prenet_dropout = cfg.prenet_dropout
        bridge_layer = nn.TransformerEncoderLayer(
            cfg.d_model, cfg.nhead, cfg.ffn, cfg.dropout, batch_first=True, norm_first=True
        )
        self.bridge = nn.TransformerEncoder(bridge_layer, cfg.bridge_layers, enable_nested_tensor=False)
        frame_layer = nn.TransformerDecoderLayer(
            cfg.d_model, cfg.nhead, cfg.ffn, cfg.dropout, batch_first=True, norm_first=True
        )
        self.frame_decoder = nn.TransformerDecoder(frame_layer, cfg.layers)
        self.prenet1 = nn.Linear(frame_dim, cfg.d_model)
        self.prenet2 = nn.Linear(cfg.d_model, cfg.d_model)
        self.frame_out = nn.Linear(cfg.d_model, frame_dim)
        self.stop_out = nn.Linear(cfg.d_model, 1)

    def _prenet(self, frames: torch.Tensor) -> torch.Tensor:
        h = F.dropout(F.relu(self.prenet1(frames)), self.prenet_dropout, self.training)
        return F.dropout(F.relu(self.prenet2(h)), self.prenet_dropout, self.training)

    def _frame_pass(self, bridged: torch.Tensor, target_frames: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        zero = torch.zeros(1, self.frame_dim)
        inputs = torch.cat([zero, target_frames[:-1]], dim=0)
        h = self._prenet(inputs).unsqueeze(0) + self.pos[: inputs.shape[0]]
        causal = nn.Transformer.generate_square_subsequent_mask(inputs.shape[0])
        dec = self.frame_decoder(h, bridged, tgt_mask=causal).squeeze(0)
        return self.frame_out(dec), self.stop_out(dec).squeeze(-1)

    def joint_loss(
        self,
        feats: torch.Tensor,
        start_id: int,
        target_ids: list[int],
        target_frames: torch.Tensor,
        stop_pos_weight: float,
    ) -> tuple[torch.Tensor, dict[str, float]]:
        memory = self.encode_speech(feats)
        tgt_in = torch.tensor([[start_id] + target_ids], dtype=torch.long)
        tgt_out = torch.tensor([target_ids + [EOS]], dtype=torch.long)
        hidden = self._decode_hidden(memory, tgt_in)
        ce = F.cross_entropy(self.out(hidden).reshape(-1, self.vocab_size), tgt_out.reshape(-1))
        bridged = self.bridge(hidden)
        pred, stop_logits = self._frame_pass(bridged, target_frames)
        stop_target = torch.zeros(target_frames.shape[0])
        stop_target[-1] = 1.0
        l1 = (pred - target_frames).abs().mean()
        stop = F.binary_cross_entropy_with_logits(
            stop_logits, stop_target, pos_weight=torch.tensor(stop_pos_weight)
        )
        total = ce + l1 + stop
        return total, {"text_ce": float(ce), "frame_l1": float(l1), "stop_bce": float(stop)}

    @torch.no_grad()
    def synthesize_speech(
        self, feats: torch.Tensor, start_id: int, max_text_len: int = 24,
        max_frames: int = 400, stop_threshold: float = 0.5,
    ) -> tuple[list[int], np.ndarray]:
        """Greedy text decode, bridge, then autoregressive frame decode."""
        self.eval()
        text_ids = self.translate_speech(feats, start_id, max_len=max_text_len)
        memory = self.encode_speech(feats)
        tgt_in = torch.tensor([[start_id] + text_ids], dtype=torch.long)
        hidden = self._decode_hidden(memory, tgt_in)
        bridged = self.bridge(hidden)
        frames: list[torch.Tensor] = []
        for _ in range(max_frames):
            zero = torch.zeros(1, self.frame_dim)
            inputs = zero if not frames else torch.cat([zero, torch.stack(frames)], dim=0)
            h = self._prenet(inputs).unsqueeze(0) + self.pos[: inputs.shape[0]]
            causal = nn.Transformer.generate_square_subsequent_mask(inputs.shape[0])
            dec = self.frame_decoder(h, bridged, tgt_mask=causal).squeeze(0)
            frames.append(self.frame_out(dec)[-1])
            if torch.sigmoid(self.stop_out(dec)[-1, 0]) > stop_threshold:
                break
        return text_ids, torch.stack(frames).numpy().astype(np.float32)


@dataclass
class StudentTrainResult:
    model: StudentS2TT
    curves: dict[str, list[float]] = field(default_factory=dict)
    selected_steps: list[int] = field(default_factory=list)


def _train_student(model, items_train, items_valid, cfg: StudentConfig, loss_fn, stage: str) -> StudentTrainResult:
    with training_guard(stage):
        torch.manual_seed(cfg.seed)
        opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
        rng = np.random.default_rng(cfg.seed)

        def valid_loss() -> float:
            model.eval()
            with torch.no_grad():
                vals = [float(loss_fn(model, it)) for it in items_valid]
            model.train()
            return float(np.mean(vals)) if vals else float("nan")

        curves: dict[str, list[float]] = {"train_loss": [], "valid_loss": [valid_loss()]}
        history: list[Checkpoint] = []
        model.train()
        for step in range(cfg.steps):
            idx = rng.choice(len(items_train), size=min(cfg.batch_size, len(items_train)), replace=False)
            opt.zero_grad()
            loss = torch.stack([loss_fn(model, items_train[i]) for i in idx]).mean()
            if not torch.isfinite(loss):
                raise NonFiniteLossError("student_loss")
            loss.backward()
            opt.step()
            curves["train_loss"].append(float(loss.detach()))
            if (step + 1) % cfg.ckpt_interval == 0:
                history.append(
                    Checkpoint(params=module_to_params(model), step=step + 1, valid_loss=valid_loss(), seed=cfg.seed)
                )
        if not history:
            history.append(
                Checkpoint(params=module_to_params(model), step=cfg.steps, valid_loss=valid_loss(), seed=cfg.seed)
            )
        best = select_checkpoints(history, "best_k_by_valid_loss", cfg.average_best)
        params_into_module(model, average_checkpoints(best).params)
        curves["valid_loss"].append(valid_loss())
        return StudentTrainResult(model=model, curves=curves, selected_steps=[c.step for c in best])


def _text_items(pairs: list[PseudoPair], encode_text) -> list[tuple[torch.Tensor, list[int]]]:
    items = []
    for p in pairs:
        ids = encode_text(p.target_text)
        if ids:
            items.append((torch.from_numpy(p.source_features.astype(np.float32)), ids))
    return items


def train_student_s2tt(
    model: StudentS2TT,
    train_pairs: list[PseudoPair],
    valid_pairs: list[PseudoPair],
    encode_text,
    start_id: int,
    cfg: StudentConfig,
) -> StudentTrainResult:
    """Cross-entropy on pseudo-pairs; best-5-by-validation-loss averaging."""
    items_train = _text_items(train_pairs, encode_text)
    items_valid = _text_items(valid_pairs, encode_text)
    if not items_train:
        raise ValueError("no usable pseudo pairs")

    def loss_fn(m, item):
        feats, ids = item
        return m.loss(feats, start_id, ids)

    return _train_student(model, items_train, items_valid, cfg, loss_fn, "train-student-s2tt")


def train_student_s2st(
    model: StudentS2ST,
    train_pairs: list[PseudoPair],
    valid_pairs: list[PseudoPair],
    encode_text,
    start_id: int,
    cfg: StudentConfig,
) -> StudentTrainResult:
    """Joint text + frame training; consumes both targets of each pair."""

    def items_of(pairs):
        items = []
        for p in pairs:
            if p.target_frames is None or p.target_text is None:
                continue
            ids = encode_text(p.target_text)
            if ids:
                items.append(
                    (
                        torch.from_numpy(p.source_features.astype(np.float32)),
                        ids,
                        torch.from_numpy(p.target_frames.astype(np.float32)),
                    )
                )
        return items

    items_train = items_of(train_pairs)
    items_valid = items_of(valid_pairs)
    if not items_train:
        raise ValueError("no usable pseudo pairs")

    def loss_fn(m, item):
        feats, ids, frames = item
        total, _ = m.joint_loss(feats, start_id, ids, frames, cfg.stop_pos_weight)
        return total

    return _train_student(model, items_train, items_valid, cfg, loss_fn, "train-student-s2st")
