"""Oracle nearest-prototype reference ASR (evaluation only).

Built from a world's gold prototype table, so constructing one inside a
training stage raises through the gold-access guard.
"""

from __future__ import annotations

import numpy as np

from .kmeans import Codebook, assign_labels, merge_consecutive
from .textnorm import Lexicon
from .uasr.decode import phonemes_to_words
from .vocab import SIL, Vocab


class OracleAsr:
    def __init__(
        self,
        prototypes: np.ndarray,
        symbols: list[str],
        phoneme_vocab: Vocab,
        lexicon: Lexicon,
        word_lm=None,
        beam: int = 8,
        lm_weight: float = 0.5,
        word_score: float = -0.5,
    ):
        if symbols[0] != "<sil>":
            raise ValueError("prototype row 0 must be <sil>")
        self.codebook = Codebook(np.asarray(prototypes, dtype=np.float32))
        self.phoneme_ids = [SIL] + [phoneme_vocab.id(s) for s in symbols[1:]]
        self.phoneme_vocab = phoneme_vocab
        self.lexicon = lexicon
        self.word_lm = word_lm
        self.beam = beam
        self.lm_weight = lm_weight
        self.word_score = word_score

    def phoneme_ids_of(self, frames: np.ndarray, keep_sil: bool = False) -> list[int]:
        """Nearest prototype per frame, merge runs, drop silence."""
        if frames.shape[0] == 0:
            return []
        labels = merge_consecutive(assign_labels(frames, self.codebook)).labels
        ids = [self.phoneme_ids[l - 1] for l in labels]
        return ids if keep_sil else [p for p in ids if p != SIL]

    def transcribe(self, frames: np.ndarray) -> str:
        result = phonemes_to_words(
            self.phoneme_ids_of(frames), self.lexicon, self.phoneme_vocab,
            word_lm=self.word_lm, beam=self.beam,
            lm_weight=self.lm_weight, word_score=self.word_score,
        )
        return " ".join(result.words)
