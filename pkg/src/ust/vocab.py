"""Symbol tables with fixed reserved ids.

Every vocabulary (phoneme or word) reserves ids 0..5 for
pad, bos, eos, mask, blank and silence, in that order. Content symbols
start at id 6.
"""

from __future__ import annotations

from dataclasses import dataclass, field

RESERVED = ("<pad>", "<bos>", "<eos>", "<mask>", "<blank>", "<sil>")

PAD, BOS, EOS, MASK, BLANK, SIL = range(6)


@dataclass(frozen=True)
class Vocab:
    id_to_symbol: tuple[str, ...]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if tuple(self.id_to_symbol[:6]) != RESERVED:
            raise ValueError("reserved symbols must occupy ids 0..5")
        index = {}
        for i, sym in enumerate(self.id_to_symbol):
            if sym in index:
                raise ValueError(f"duplicate symbol {sym!r}")
            index[sym] = i
        object.__setattr__(self, "_index", index)

    @property
    def pad(self) -> int:
        return PAD

    @property
    def bos(self) -> int:
        return BOS

    @property
    def eos(self) -> int:
        return EOS

    @property
    def mask(self) -> int:
        return MASK

    @property
    def blank(self) -> int:
        return BLANK

    @property
    def sil(self) -> int:
        return SIL

    def __len__(self) -> int:
        return len(self.id_to_symbol)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._index

    def id(self, symbol: str) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise KeyError(f"symbol not in vocabulary: {symbol!r}") from None

    def symbol(self, idx: int) -> str:
        return self.id_to_symbol[idx]

    def encode(self, symbols: list[str]) -> list[int]:
        return [self.id(s) for s in symbols]

    def decode(self, ids: list[int]) -> list[str]:
        return [self.symbol(i) for i in ids]

    @property
    def content_ids(self) -> list[int]:
        return list(range(6, len(self.id_to_symbol)))

    @property
    def content_symbols(self) -> list[str]:
        return list(self.id_to_symbol[6:])


def build_vocab(content_symbols: list[str]) -> Vocab:
    """Vocabulary with the fixed reserved block followed by content symbols."""
    return Vocab(tuple(RESERVED) + tuple(content_symbols))
