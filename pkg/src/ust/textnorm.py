"""Spoken-form text normalization and table-driven phonemization."""

from __future__ import annotations

import re

from .errors import UnknownWordError
from .vocab import SIL, Vocab

_WS = re.compile(r"\s+")

# Spoken form keeps letters, digits, ASCII hyphen and ASCII apostrophe.
# Every other character becomes a space.
_KEPT = "-'"


def normalize_text(raw: str) -> str:
    """Lowercase spoken form: non letter/digit/hyphen/apostrophe -> space."""
    lowered = raw.lower()
    out = []
    for ch in lowered:
        if ch.isalpha() or ch.isdigit() or ch in _KEPT:
            out.append(ch)
        else:
            out.append(" ")
    return _WS.sub(" ", "".join(out)).strip()


Lexicon = dict[str, list[str]]
# word (normalized spelling) -> phoneme symbol sequence


def phonemize(norm_text: str, lexicon: Lexicon, phoneme_vocab: Vocab) -> list[int]:
    """Concatenate per-word phonemes with a silence id between words.

    Raises UnknownWordError for words missing from the lexicon.
    """
    words = norm_text.split()
    out: list[int] = []
    for i, word in enumerate(words):
        if word not in lexicon:
            raise UnknownWordError(word)
        if i > 0:
            out.append(SIL)
        out.extend(phoneme_vocab.id(p) for p in lexicon[word])
    return out


def strip_silence(phonemes: list[int]) -> list[int]:
    return [p for p in phonemes if p != SIL]
