"""Witten-Bell interpolated n-gram language models with ARPA file IO.

Tokens are strings. Sentences are scored with one <s> of left context and
a terminating </s>. Unknown tokens map to <unk>, which receives the
unigram interpolation mass, so every query has positive probability.
The ARPA export stores the interpolated probabilities plus backoff
weights T(h)/(c(h)+T(h)); reloading reproduces the in-memory scores.
"""

from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path

from .errors import MalformedError

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

_LOG10 = math.log(10.0)


class NGramLanguageModel:
    def __init__(self, order: int = 4):
        if not 1 <= order <= 4:
            raise ValueError("order must be in 1..4")
        self.order = order
        # counts[n][gram] for grams whose last token is predictable (not <s>)
        self.counts: list[dict[tuple, int]] = [dict() for _ in range(order + 1)]
        # ctx[h] = [total count, distinct continuations]
        self.ctx: dict[tuple, list[int]] = defaultdict(lambda: [0, 0])
        self.vocab: set[str] = set()
        self.total_unigrams = 0

    # -- training ----------------------------------------------------------

    def fit(self, corpus: list[list[str]]) -> "NGramLanguageModel":
        for tokens in corpus:
            seq = [BOS] + list(tokens) + [EOS]
            for i in range(1, len(seq)):
                for n in range(1, self.order + 1):
                    if i - n + 1 < 0:
                        continue
                    gram = tuple(seq[i - n + 1 : i + 1])
                    table = self.counts[n]
                    if gram not in table:
                        table[gram] = 0
                        if n > 1:
                            self.ctx[gram[:-1]][1] += 1
                    table[gram] += 1
                    if n > 1:
                        self.ctx[gram[:-1]][0] += 1
        self.vocab = {g[0] for g in self.counts[1]}
        self.total_unigrams = sum(self.counts[1].values())
        return self

    # -- scoring -----------------------------------------------------------

    def _p_unigram(self, word: str) -> float:
        t = len(self.vocab)
        if self.total_unigrams + t == 0:
            return 1.0  # untrained model: everything is <unk>
        uniform = 1.0 / (t + 1)  # seen types + <unk>
        c = self.counts[1].get((word,), 0)
        return (c + t * uniform) / (self.total_unigrams + t)

    def prob(self, word: str, context: tuple[str, ...] = ()) -> float:
        """Interpolated P(word | context), context truncated to order-1."""
        if word not in self.vocab and word != EOS:
            word = UNK
        context = tuple(context)[-(self.order - 1) :] if self.order > 1 else ()
        return self._prob(word, context)

    def _prob(self, word: str, context: tuple[str, ...]) -> float:
        if not context:
            return self._p_unigram(word)
        total, distinct = self.ctx.get(context, (0, 0))
        lower = self._prob(word, context[1:])
        if total + distinct == 0:
            return lower
        c = self.counts[len(context) + 1].get(context + (word,), 0)
        return (c + distinct * lower) / (total + distinct)

    def logp(self, word: str, context: tuple[str, ...] = ()) -> float:
        return math.log(self.prob(word, context))

    def sentence_nll(self, tokens: list[str]) -> float:
        """Negative log likelihood per symbol (nats), including </s>."""
        seq = [BOS] + list(tokens) + [EOS]
        nll = 0.0
        for i in range(1, len(seq)):
            nll -= self.logp(seq[i], tuple(seq[max(0, i - self.order + 1) : i]))
        return nll / (len(tokens) + 1)

    # -- ARPA --------------------------------------------------------------

    def to_arpa(self, path: str | Path) -> None:
        entries: list[list[tuple[tuple, float, float | None]]] = []
        for n in range(1, self.order + 1):
            rows = []
            grams = set(self.counts[n])
            if n == 1:
                grams |= {(BOS,), (UNK,)}
            for gram in sorted(grams):
                if gram == (BOS,):
                    logp = -99.0
                else:
                    logp = math.log10(self._prob(gram[-1], gram[:-1]))
                bow = None
                if n < self.order and gram in self.ctx:
                    total, distinct = self.ctx[gram]
                    bow = math.log10(distinct / (total + distinct))
                rows.append((gram, logp, bow))
            entries.append(rows)

        lines = ["\\data\\"]
        for n, rows in enumerate(entries, 1):
            lines.append(f"ngram {n}={len(rows)}")
        for n, rows in enumerate(entries, 1):
            lines.append("")
            lines.append(f"\\{n}-grams:")
            for gram, logp, bow in rows:
                cols = [f"{logp:.7f}", " ".join(gram)]
                if bow is not None:
                    cols.append(f"{bow:.7f}")
                lines.append("\t".join(cols))
        lines.append("")
        lines.append("\\end\\")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


class ArpaLanguageModel:
    """Backoff query model over a parsed ARPA file."""

    def __init__(self, order: int, probs: dict[tuple, float], bows: dict[tuple, float], vocab: set[str]):
        self.order = order
        self.probs = probs  # natural-log probabilities
        self.bows = bows
        self.vocab = vocab

    @classmethod
    def load(cls, path: str | Path) -> "ArpaLanguageModel":
        probs: dict[tuple, float] = {}
        bows: dict[tuple, float] = {}
        order = 0
        section = 0
        for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.strip()
            if not line or line in ("\\data\\", "\\end\\") or line.startswith("ngram "):
                continue
            if line.endswith("-grams:"):
                try:
                    section = int(line[1:].split("-")[0])
                except ValueError:
                    raise MalformedError(f"bad section header {line!r}", line_no)
                order = max(order, section)
                continue
            if section == 0:
                raise MalformedError(f"entry outside any section: {line!r}", line_no)
            cols = line.split("\t") if "\t" in line else line.split()
            if "\t" in line:
                if len(cols) == 2:
                    logp, gram_s = cols
                    bow = None
                elif len(cols) == 3:
                    logp, gram_s, bow = cols
                else:
                    raise MalformedError(f"bad entry {line!r}", line_no)
                gram = tuple(gram_s.split())
            else:
                logp, gram, bow = cols[0], tuple(cols[1 : 1 + section]), None
                if len(cols) == section + 2:
                    bow = cols[-1]
                elif len(cols) != section + 1:
                    raise MalformedError(f"bad entry {line!r}", line_no)
            probs[gram] = float(logp) * _LOG10
            if bow is not None:
                bows[gram] = float(bow) * _LOG10
        vocab = {g[0] for g in probs if len(g) == 1}
        return cls(order, probs, bows, vocab)

    def logp(self, word: str, context: tuple[str, ...] = ()) -> float:
        if word not in self.vocab and word != EOS:
            word = UNK
        context = tuple(context)[-(self.order - 1) :] if self.order > 1 else ()
        return self._logp(word, context)

    def _logp(self, word: str, context: tuple[str, ...]) -> float:
        gram = context + (word,)
        if gram in self.probs:
            return self.probs[gram]
        if not context:
            # every predictable word maps to a unigram entry or <unk>
            return self.probs.get((word,), self.probs[(UNK,)])
        return self.bows.get(context, 0.0) + self._logp(word, context[1:])

    def sentence_nll(self, tokens: list[str]) -> float:
        seq = [BOS] + list(tokens) + [EOS]
        nll = 0.0
        for i in range(1, len(seq)):
            nll -= self.logp(seq[i], tuple(seq[max(0, i - self.order + 1) : i]))
        return nll / (len(tokens) + 1)


def train_lm(corpus: list[list[str]], order: int = 4) -> NGramLanguageModel:
    return NGramLanguageModel(order).fit(corpus)
