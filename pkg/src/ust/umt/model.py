"""Toy shared-vocabulary transformer seq2seq with greedy and beam decoding.

Encoder input rows are [lang tag] + tokens + [eos]; decoding starts from
the output language tag. Language tags are ordinary content symbols named
"<lang:xx>".
"""

from __future__ import annotations

import math
from collections import Counter

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..vocab import EOS, PAD, Vocab, build_vocab


def lang_tag(name: str) -> str:
    return f"<lang:{name}>"


def build_text_vocab(corpora: dict[str, list[str]]) -> tuple[Vocab, Counter]:
    """Whitespace-token vocabulary over all corpora plus language tags.

    Returns the vocabulary and corpus token frequencies (for masking).
    """
    freq: Counter = Counter()
    for lines in corpora.values():
        for line in lines:
            freq.update(line.split())
    tags = [lang_tag(name) for name in sorted(corpora)]
    return build_vocab(tags + sorted(freq)), freq


def encode_line(line: str, vocab: Vocab) -> list[int]:
    """Tokens to ids; out-of-vocabulary words become <mask>."""
    return [vocab.id(w) if w in vocab else vocab.mask for w in line.split()]


def decode_ids(ids: list[int], vocab: Vocab) -> str:
    return " ".join(vocab.symbol(i) for i in ids if i >= 6 and not vocab.symbol(i).startswith("<lang:"))


def sinusoidal_positions(max_len: int, d_model: int) -> torch.Tensor:
    pos = torch.arange(max_len).unsqueeze(1).float()
    div = torch.exp(torch.arange(0, d_model, 2).float() * (-math.log(10000.0) / d_model))
    pe = torch.zeros(max_len, d_model)
    pe[:, 0::2] = torch.sin(pos * div)
    pe[:, 1::2] = torch.cos(pos * div)
    return pe


def pad_batch(rows: list[list[int]], pad: int = PAD) -> torch.Tensor:
    width = max(len(r) for r in rows)
    out = torch.full((len(rows), width), pad, dtype=torch.long)
    for i, r in enumerate(rows):
        out[i, : len(r)] = torch.tensor(r, dtype=torch.long)
    return out


class ToySeq2Seq(nn.Module):
    def __init__(
        self,
        vocab_size: int,
        d_model: int = 96,
        nhead: int = 4,
        num_layers: int = 2,
        ffn: int = 192,
        dropout: float = 0.1,
        max_len: int = 128,
    ):
        super().__init__()
        self.vocab_size = vocab_size
        self.d_model = d_model
        self.dropout = dropout
        self.arch = dict(
            vocab_size=vocab_size, d_model=d_model, nhead=nhead, num_layers=num_layers,
            ffn=ffn, dropout=dropout, max_len=max_len,
        )
        self.emb = nn.Embedding(vocab_size, d_model, padding_idx=PAD)
        nn.init.normal_(self.emb.weight, mean=0.0, std=d_model**-0.5)
        with torch.no_grad():
            self.emb.weight[PAD].zero_()
        self.register_buffer("pos", sinusoidal_positions(max_len, d_model), persistent=False)
        enc_layer = nn.TransformerEncoderLayer(
            d_model, nhead, ffn, dropout, batch_first=True, norm_first=True
        )
        dec_layer = nn.TransformerDecoderLayer(
            d_model, nhead, ffn, dropout, batch_first=True, norm_first=True
        )
        self.encoder = nn.TransformerEncoder(enc_layer, num_layers, enable_nested_tensor=False)
        self.decoder = nn.TransformerDecoder(dec_layer, num_layers)
        self.out = nn.Linear(d_model, vocab_size, bias=False)
        self.out.weight = self.emb.weight

    def _embed(self, ids: torch.Tensor) -> torch.Tensor:
        return self.emb(ids) * math.sqrt(self.d_model) + self.pos[: ids.shape[1]]

    def encode(self, src: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        pad_mask = src == PAD
        memory = self.encoder(self._embed(src), src_key_padding_mask=pad_mask)
        return memory, pad_mask

    def decoder_hidden(
        self, memory: torch.Tensor, memory_pad_mask: torch.Tensor, tgt_in: torch.Tensor
    ) -> torch.Tensor:
        causal = nn.Transformer.generate_square_subsequent_mask(tgt_in.shape[1])
        return self.decoder(
            self._embed(tgt_in),
            memory,
            tgt_mask=causal,
            tgt_key_padding_mask=tgt_in == PAD,
            memory_key_padding_mask=memory_pad_mask,
        )

    def loss(self, src: torch.Tensor, tgt_in: torch.Tensor, tgt_out: torch.Tensor) -> torch.Tensor:
        memory, pad_mask = self.encode(src)
        hidden = self.decoder_hidden(memory, pad_mask, tgt_in)
        logits = self.out(hidden)
        return F.cross_entropy(
            logits.reshape(-1, self.vocab_size), tgt_out.reshape(-1), ignore_index=PAD
        )


def _mask_logits(logits: torch.Tensor, allowed: torch.Tensor | None) -> torch.Tensor:
    if allowed is None:
        return logits
    return logits.masked_fill(~allowed, float("-inf"))


@torch.no_grad()
def greedy_decode(
    model: ToySeq2Seq,
    src_rows: list[list[int]],
    start_id: int,
    max_len: int = 32,
    allowed: torch.Tensor | None = None,
) -> list[list[int]]:
    """Batch greedy decoding; returns token ids without start/eos."""
    model.eval()
    src = pad_batch(src_rows)
    memory, pad_mask = model.encode(src)
    b = len(src_rows)
    tgt = torch.full((b, 1), start_id, dtype=torch.long)
    finished = torch.zeros(b, dtype=torch.bool)
    for _ in range(max_len):
        hidden = model.decoder_hidden(memory, pad_mask, tgt)
        logits = _mask_logits(model.out(hidden[:, -1]), allowed)
        nxt = logits.argmax(dim=-1)
        nxt[finished] = PAD
        tgt = torch.cat([tgt, nxt.unsqueeze(1)], dim=1)
        finished |= nxt == EOS
        if bool(finished.all()):
            break
    outs = []
    for row in tgt[:, 1:].tolist():
        ids = []
        for t in row:
            if t in (EOS, PAD):
                break
            ids.append(t)
        outs.append(ids)
    return outs


@torch.no_grad()
def beam_decode(
    model: ToySeq2Seq,
    src_row: list[int],
    start_id: int,
    beam: int = 4,
    nbest: int = 1,
    max_len: int = 32,
    allowed: torch.Tensor | None = None,
) -> list[tuple[list[int], float]]:
    """Beam search over one source row; returns up to nbest (ids, logprob),
    scores non-increasing. Ties broken by token ids for determinism."""
    if nbest > beam:
        raise ValueError("nbest must be <= beam")
    model.eval()
    memory, pad_mask = model.encode(pad_batch([src_row]))
    hyps: list[tuple[float, list[int], bool]] = [(0.0, [start_id], False)]
    finished: list[tuple[float, list[int]]] = []
    for _ in range(max_len):
        live = [(s, seq) for s, seq, done in hyps if not done]
        if not live:
            break
        cand: list[tuple[float, list[int], bool]] = []
        for score, seq in live:
            hidden = model.decoder_hidden(memory, pad_mask, torch.tensor([seq]))
            logp = F.log_softmax(_mask_logits(model.out(hidden[:, -1])[0], allowed), dim=-1)
            top = torch.topk(logp, min(beam, logp.shape[-1]))
            for val, tok in zip(top.values.tolist(), top.indices.tolist()):
                if val == float("-inf"):
                    continue
                cand.append((score + val, seq + [tok], tok == EOS))
        cand.sort(key=lambda c: (-c[0], c[1]))
        hyps = cand[:beam]
        still = []
        for score, seq, done in hyps:
            if done:
                finished.append((score, seq))
            else:
                still.append((score, seq, False))
        if len(finished) >= beam:
            break
        hyps = still
    for score, seq, _ in hyps:  # unfinished leftovers at max_len
        finished.append((score, seq))
    finished.sort(key=lambda c: (-c[0], c[1]))
    out = []
    for score, seq in finished[:nbest]:
        ids = [t for t in seq[1:] if t != EOS]
        out.append((ids, score))
    return out


def translate(
    model: ToySeq2Seq,
    vocab: Vocab,
    text: str,
    src_lang: str,
    tgt_lang: str,
    beam: int = 4,
    nbest: int = 1,
    max_len: int = 32,
    allowed: torch.Tensor | None = None,
) -> list[tuple[str, float]]:
    """n-best translations of one sentence as (text, score), scores sorted."""
    src = [vocab.id(lang_tag(src_lang))] + encode_line(text, vocab) + [EOS]
    results = beam_decode(
        model, src, vocab.id(lang_tag(tgt_lang)), beam=beam, nbest=nbest, max_len=max_len, allowed=allowed
    )
    return [(decode_ids(ids, vocab), score) for ids, score in results]
