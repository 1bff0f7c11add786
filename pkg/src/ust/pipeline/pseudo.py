"""Cascaded pseudo-label generation for S2TT and S2ST students.

Components are passed as callables so oracle substitutes drop in during
testing: asr(features) -> normalized text, tdn(normalized) -> raw text,
mt(raw, nbest) -> [(raw translation, score)], tts(phoneme ids) -> frames.
Per-utterance failures skip that utterance and are counted by reason.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..data import CorpusManifest, load_features, save_features
from ..errors import MalformedError, UnknownWordError
from ..textnorm import Lexicon, normalize_text, phonemize, strip_silence
from ..vocab import Vocab


@dataclass
class PseudoPair:
    utt_id: str
    source_features: np.ndarray
    target_text: str | None = None
    target_frames: np.ndarray | None = None
    teacher_score: float = 0.0
    variant_index: int = 0

    def __post_init__(self):
        if self.target_text is None and self.target_frames is None:
            raise ValueError("pseudo pair needs target_text or target_frames")


@dataclass
class PseudoLabelStats:
    emitted: int = 0
    skipped: dict[str, int] = field(default_factory=dict)

    def skip(self, reason: str) -> None:
        self.skipped[reason] = self.skipped.get(reason, 0) + 1


def pseudo_label_s2tt(
    speech: CorpusManifest, asr, tdn, mt, nbest: int = 2
) -> tuple[list[PseudoPair], PseudoLabelStats]:
    """ASR -> TDN -> MT cascade; nbest variants per utterance."""
    pairs: list[PseudoPair] = []
    stats = PseudoLabelStats()
    for rec in speech:
        feats = speech.features(rec)
        norm = asr(feats)
        if not norm.strip():
            stats.skip("empty_transcript")
            continue
        raw = tdn(norm)
        if not raw.strip():
            stats.skip("empty_denormalization")
            continue
        translations = mt(raw, nbest)
        if not translations:
            stats.skip("empty_translation")
            continue
        for variant, (text, score) in enumerate(translations[:nbest]):
            if not text.strip():
                stats.skip("empty_translation")
                continue
            pairs.append(
                PseudoPair(
                    utt_id=rec.id, source_features=feats, target_text=text,
                    teacher_score=score, variant_index=variant,
                )
            )
            stats.emitted += 1
    return pairs, stats


def pseudo_label_s2st(
    speech: CorpusManifest,
    asr,
    tdn,
    mt,
    tts,
    tgt_lexicon: Lexicon,
    tgt_phoneme_vocab: Vocab,
    nbest: int = 2,
) -> tuple[list[PseudoPair], PseudoLabelStats]:
    """S2TT cascade plus synthesis of target frames from each translation."""
    text_pairs, stats = pseudo_label_s2tt(speech, asr, tdn, mt, nbest=nbest)
    pairs: list[PseudoPair] = []
    emitted = 0
    for pair in text_pairs:
        norm = normalize_text(pair.target_text)
        try:
            phonemes = strip_silence(phonemize(norm, tgt_lexicon, tgt_phoneme_vocab))
        except UnknownWordError:
            stats.skip("unknown_word_in_translation")
            continue
        if not phonemes:
            stats.skip("empty_phonemes")
            continue
        frames = tts(phonemes)
        if frames is None or frames.shape[0] == 0:
            stats.skip("empty_synthesis")
            continue
        pair.target_frames = np.asarray(frames, dtype=np.float32)
        pairs.append(pair)
        emitted += 1
    stats.emitted = emitted
    return pairs, stats


# -- shard IO ---------------------------------------------------------------


def save_pseudo_pairs(pairs: list[PseudoPair], out_dir: str | Path) -> None:
    """TSV manifest (id, variant, src path, target text, frames path, score)
    plus feature files."""
    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    rows = []
    for p in pairs:
        src_rel = f"frames/{p.utt_id}.src.bin"
        if not (out / src_rel).is_file():
            save_features(out / src_rel, p.source_features)
        frames_rel = ""
        if p.target_frames is not None:
            frames_rel = f"frames/{p.utt_id}.v{p.variant_index}.tgt.bin"
            save_features(out / frames_rel, p.target_frames)
        rows.append(
            "\t".join(
                [p.utt_id, str(p.variant_index), src_rel, p.target_text or "", frames_rel, f"{p.teacher_score:.6f}"]
            )
        )
    (out / "pairs.tsv").write_text("".join(r + "\n" for r in rows), encoding="utf-8")


def load_pseudo_pairs(shard_dir: str | Path) -> list[PseudoPair]:
    shard = Path(shard_dir)
    pairs = []
    for line_no, line in enumerate((shard / "pairs.tsv").read_text(encoding="utf-8").splitlines(), 1):
        if not line:
            continue
        cols = line.split("\t")
        if len(cols) != 6:
            raise MalformedError(f"expected 6 columns, got {len(cols)}", line_no)
        utt_id, variant, src_rel, text, frames_rel, score = cols
        pairs.append(
            PseudoPair(
                utt_id=utt_id,
                source_features=load_features(shard / src_rel),
                target_text=text or None,
                target_frames=load_features(shard / frames_rel) if frames_rel else None,
                teacher_score=float(score),
                variant_index=int(variant),
            )
        )
    return pairs
