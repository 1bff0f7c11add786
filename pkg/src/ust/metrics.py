"""Evaluation metrics: edit rates (PER/WER), corpus BLEU, n-gram JSD.

All functions are pure; corpus-level scores aggregate counts before
dividing, the usual convention for WER/PER and BLEU.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Sequence

from .errors import EmptyCorpusError, EmptyReferenceError, LengthMismatchError


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Edit distance with unit substitution/insertion/deletion costs."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[-1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def edit_rate(hyp: Sequence, ref: Sequence) -> float:
    """Levenshtein(hyp, ref) / |ref|; PER or WER depending on token type."""
    if len(ref) == 0:
        raise EmptyReferenceError("edit_rate needs a non-empty reference")
    return levenshtein(hyp, ref) / len(ref)


def corpus_edit_rate(hyps: list[Sequence], refs: list[Sequence]) -> float:
    """Sum of edit distances over sum of reference lengths."""
    if len(hyps) != len(refs):
        raise LengthMismatchError(f"{len(hyps)} hyps vs {len(refs)} refs")
    total_ref = sum(len(r) for r in refs)
    if total_ref == 0:
        raise EmptyReferenceError("all references empty")
    return sum(levenshtein(h, r) for h, r in zip(hyps, refs)) / total_ref


def ngrams(seq: Sequence[Hashable], order: int) -> list[tuple]:
    return [tuple(seq[i : i + order]) for i in range(len(seq) - order + 1)]


@dataclass
class NGramDistribution:
    order: int = 4
    counts: Counter = field(default_factory=Counter)
    total: int = 0

    def add(self, seq: Sequence[Hashable]) -> None:
        for g in ngrams(seq, self.order):
            self.counts[g] += 1
            self.total += 1

    @classmethod
    def from_corpus(cls, corpus: list[Sequence[Hashable]], order: int = 4) -> "NGramDistribution":
        dist = cls(order=order)
        for seq in corpus:
            dist.add(seq)
        return dist

    def prob(self, gram: tuple) -> float:
        return self.counts[gram] / self.total if self.total else 0.0


def jsd(p: NGramDistribution, q: NGramDistribution) -> float:
    """Jensen-Shannon divergence, log base 2, over the union support."""
    if p.total == 0 or q.total == 0:
        raise EmptyCorpusError("JSD needs at least one n-gram on each side")
    support = set(p.counts) | set(q.counts)
    val = 0.0
    for g in support:
        pp, qq = p.prob(g), q.prob(g)
        m = 0.5 * (pp + qq)
        if pp > 0:
            val += 0.5 * pp * math.log2(pp / m)
        if qq > 0:
            val += 0.5 * qq * math.log2(qq / m)
    return min(max(val, 0.0), 1.0)


def jsd_4gram(corpus_a: list[Sequence[Hashable]], corpus_b: list[Sequence[Hashable]], order: int = 4) -> float:
    return jsd(
        NGramDistribution.from_corpus(corpus_a, order),
        NGramDistribution.from_corpus(corpus_b, order),
    )


def corpus_bleu(
    hyps: list[Sequence[Hashable]],
    refs: list[Sequence[Hashable]],
    max_order: int = 4,
    smooth: bool = True,
) -> float:
    """Corpus BLEU in [0, 100] with brevity penalty.

    Smoothing (on by default) adds one to numerator and denominator of
    the precisions for orders >= 2, so micro-corpora do not zero out.
    """
    if len(hyps) != len(refs):
        raise LengthMismatchError(f"{len(hyps)} hyps vs {len(refs)} refs")
    matches = [0] * max_order
    totals = [0] * max_order
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hyps, refs):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_order + 1):
            hyp_grams = Counter(ngrams(hyp, n))
            ref_grams = Counter(ngrams(ref, n))
            totals[n - 1] += sum(hyp_grams.values())
            matches[n - 1] += sum(min(c, ref_grams[g]) for g, c in hyp_grams.items())

    log_precisions = []
    for n in range(1, max_order + 1):
        m, t = matches[n - 1], totals[n - 1]
        if smooth and n >= 2:
            m, t = m + 1, t + 1
        if m == 0 or t == 0:
            return 0.0
        log_precisions.append(math.log(m / t))
    if hyp_len == 0:
        return 0.0
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(sum(log_precisions) / max_order)


def token_accuracy(hyps: list[Sequence[Hashable]], refs: list[Sequence[Hashable]]) -> float:
    """Position-wise token match rate, penalizing length mismatch."""
    if len(hyps) != len(refs):
        raise LengthMismatchError(f"{len(hyps)} hyps vs {len(refs)} refs")
    correct = 0
    total = 0
    for hyp, ref in zip(hyps, refs):
        total += max(len(hyp), len(ref))
        correct += sum(h == r for h, r in zip(hyp, ref))
    return correct / total if total else 0.0


def _ranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Spearman rank correlation with average ranks for ties."""
    if len(xs) != len(ys) or len(xs) < 2:
        raise LengthMismatchError("spearman needs two equal-length series, n >= 2")
    rx, ry = _ranks(xs), _ranks(ys)
    mx = sum(rx) / len(rx)
    my = sum(ry) / len(ry)
    num = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    den = math.sqrt(sum((a - mx) ** 2 for a in rx) * sum((b - my) ** 2 for b in ry))
    return num / den if den else 0.0


def score_speech(frames, ref_text: str, reference_asr, metric: str = "wer"):
    """Transcribe synthesized frames with a reference ASR, then score.

    `reference_asr` exposes transcribe(frames) -> normalized text.
    metric: "wer" or "bleu" (corpus of one).
    """
    hyp = reference_asr.transcribe(frames).split()
    ref = ref_text.split()
    if metric == "wer":
        return edit_rate(hyp, ref)
    if metric == "bleu":
        return corpus_bleu([hyp], [ref])
    raise ValueError(f"unknown metric {metric!r}")
