"""Save/load trained models through the named-tensor checkpoint container."""

from __future__ import annotations

from pathlib import Path

from .checkpoints import Checkpoint, load_checkpoint, module_to_params, params_into_module, save_checkpoint
from .errors import MalformedError
from .speech import SpeechEncoder
from .tts.model import TtsModel
from .uasr.models import PhonemeClassMap, PhonemeGenerator
from .uasr.selftrain import CtcAsrModel
from .umt.model import ToySeq2Seq
from .umt.tdn import TdnModel
from .vocab import Vocab, build_vocab


def _save(module, path, kind: str, extra: dict, step: int = 0, seed: int = 0, metric: float = float("nan")):
    ckpt = Checkpoint(
        params=module_to_params(module), step=step, seed=seed, metric=metric,
        extra={"kind": kind, "arch": module.arch, **extra},
    )
    save_checkpoint(ckpt, path)


def _load(path, kind: str) -> Checkpoint:
    ckpt = load_checkpoint(path)
    if ckpt.extra.get("kind") != kind:
        raise MalformedError(f"{path}: expected a {kind} checkpoint, got {ckpt.extra.get('kind')!r}")
    return ckpt


def save_encoder(encoder: SpeechEncoder, path: str | Path, **meta) -> None:
    _save(encoder, path, "speech_encoder", meta)


def load_encoder(path: str | Path) -> SpeechEncoder:
    ckpt = _load(path, "speech_encoder")
    enc = SpeechEncoder(**ckpt.extra["arch"])
    params_into_module(enc, ckpt.params)
    return enc


def save_generator(gen: PhonemeGenerator, class_map: PhonemeClassMap, phoneme_symbols: list[str], path, **meta) -> None:
    _save(gen, path, "uasr_generator", {"phoneme_ids": list(class_map.phoneme_ids), "phoneme_symbols": phoneme_symbols, **meta})


def load_generator(path) -> tuple[PhonemeGenerator, PhonemeClassMap, Vocab]:
    ckpt = _load(path, "uasr_generator")
    gen = PhonemeGenerator(**ckpt.extra["arch"])
    params_into_module(gen, ckpt.params)
    cmap = PhonemeClassMap(phoneme_ids=tuple(ckpt.extra["phoneme_ids"]))
    return gen, cmap, build_vocab(ckpt.extra["phoneme_symbols"])


def save_asr(asr: CtcAsrModel, path, **meta) -> None:
    extra = {
        "encoder_arch": asr.encoder.arch,
        "phoneme_symbols": list(asr.phoneme_vocab.content_symbols),
        "extract_layer": asr.extract_layer,
        **meta,
    }
    ckpt = Checkpoint(params=module_to_params(asr), extra={"kind": "ctc_asr", **extra})
    save_checkpoint(ckpt, path)


def load_asr(path) -> CtcAsrModel:
    ckpt = _load(path, "ctc_asr")
    enc = SpeechEncoder(**ckpt.extra["encoder_arch"])
    asr = CtcAsrModel(enc, build_vocab(ckpt.extra["phoneme_symbols"]), ckpt.extra["extract_layer"])
    params_into_module(asr, ckpt.params)
    return asr


def save_seq2seq(model: ToySeq2Seq, vocab: Vocab, path, kind: str = "seq2seq", **meta) -> None:
    _save(model, path, kind, {"symbols": list(vocab.content_symbols), **meta})


def load_seq2seq(path, kind: str = "seq2seq") -> tuple[ToySeq2Seq, Vocab]:
    ckpt = _load(path, kind)
    model = ToySeq2Seq(**ckpt.extra["arch"])
    params_into_module(model, ckpt.params)
    return model, build_vocab(ckpt.extra["symbols"])


def save_tdn(tdn: TdnModel, path, **meta) -> None:
    save_seq2seq(tdn.seq2seq, tdn.vocab, path, kind="tdn", **meta)


def load_tdn(path) -> TdnModel:
    model, vocab = load_seq2seq(path, kind="tdn")
    return TdnModel(seq2seq=model, vocab=vocab)


def save_tts(model: TtsModel, path, **meta) -> None:
    _save(model, path, "tts", meta)


def load_tts(path) -> TtsModel:
    ckpt = _load(path, "tts")
    model = TtsModel(**ckpt.extra["arch"])
    params_into_module(model, ckpt.params)
    return model
