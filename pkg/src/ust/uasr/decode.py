"""Phoneme decoding and lexicon-constrained word decoding.

Word decoding is a beam search over a lexicon trie with unit-cost edit
operations (substitute / insert / delete) against the hypothesis phoneme
stream and shallow n-gram LM fusion:

score(words) = -edit_penalty * levenshtein(pron(words), phonemes)
             + lm_weight * (sum log P(w|ctx) + log P(</s>|ctx))
             + word_score * len(words).

The public entry takes the best result over all widths up to `beam`, so
widening the beam never lowers the score, and a run that never pruned is
exact (equals exhaustive search).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
import torch

from ..kmeans import merge_runs
from ..textnorm import Lexicon
from ..vocab import SIL, Vocab
from .models import PhonemeGenerator, select_run_representatives  # noqa: F401


def decode_phonemes(generator: PhonemeGenerator, features, class_map) -> list[int]:
    """Framewise argmax, merge consecutive, drop silence. Returns vocab ids."""
    if isinstance(features, np.ndarray):
        features = torch.from_numpy(features.astype(np.float32))
    if features.shape[0] == 0:
        return []
    with torch.no_grad():
        logits, _ = generator(features, training=False)
    classes = merge_runs(logits.argmax(dim=-1).tolist())
    return [class_map.to_vocab(c) for c in classes if c != 0]


class LexiconTrie:
    def __init__(self, lexicon: Lexicon, phoneme_vocab: Vocab):
        # node 0 is the root; arcs keyed by phoneme id
        self.children: list[dict[int, int]] = [{}]
        self.word_at: list[str | None] = [None]
        self.min_pron_len = min(len(p) for p in lexicon.values())
        for word in sorted(lexicon):
            node = 0
            for sym in lexicon[word]:
                pid = phoneme_vocab.id(sym)
                if pid not in self.children[node]:
                    self.children.append({})
                    self.word_at.append(None)
                    self.children[node][pid] = len(self.children) - 1
                node = self.children[node][pid]
            self.word_at[node] = word


@dataclass
class WordDecodeResult:
    words: list[str]
    score: float
    matched: int  # phonemes consumed by exact-match arcs
    no_path: bool  # nothing matched even partially


# search state: (trie node, lm context) -> (score, matched, words)
_Key = tuple[int, tuple[str, ...]]
_Entry = tuple[float, int, tuple[str, ...]]


class _Search:
    def __init__(self, trie, lm, lm_weight, word_score, edit_penalty, ctx_len):
        self.trie = trie
        self.lm = lm
        self.lm_weight = lm_weight
        self.word_score = word_score
        self.edit_penalty = edit_penalty
        self.ctx_len = ctx_len

    def lm_logp(self, word: str | None, ctx: tuple[str, ...]) -> float:
        if self.lm is None:
            return 0.0
        return self.lm_weight * self.lm.logp("</s>" if word is None else word, ctx)

    def epsilon_closure(self, states: dict[_Key, _Entry]) -> dict[_Key, _Entry]:
        # deletions and word emissions consume no phoneme; every such edge
        # strictly lowers the score (checked at entry), so best-first
        # expansion reaches a fixpoint.
        best = dict(states)
        heap = [(-e[0], k) for k, e in states.items()]
        heapq.heapify(heap)
        while heap:
            neg_score, key = heapq.heappop(heap)
            entry = best.get(key)
            if entry is None or -neg_score < entry[0] - 1e-12:
                continue
            node, ctx = key
            score, matched, words = entry
            succ: list[tuple[_Key, _Entry]] = []
            word = self.trie.word_at[node]
            if word is not None and node != 0:
                new_ctx = (ctx + (word,))[-self.ctx_len :] if self.ctx_len else ()
                succ.append(
                    (
                        (0, new_ctx),
                        (score + self.lm_logp(word, ctx) + self.word_score, matched, words + (word,)),
                    )
                )
            for _, child in self.trie.children[node].items():
                succ.append(((child, ctx), (score - self.edit_penalty, matched, words)))
            for new_key, new_entry in succ:
                cur = best.get(new_key)
                if cur is None or new_entry[0] > cur[0] + 1e-12:
                    best[new_key] = new_entry
                    heapq.heappush(heap, (-new_entry[0], new_key))
        return best

    def run(self, phonemes: list[int], width: int) -> tuple[WordDecodeResult | None, bool]:
        pruned = False

        def prune(states: dict[_Key, _Entry]) -> dict[_Key, _Entry]:
            nonlocal pruned
            if len(states) <= width:
                return states
            pruned = True
            keep = sorted(states.items(), key=lambda kv: (-kv[1][0], kv[0]))[:width]
            return dict(keep)

        states = prune(self.epsilon_closure({(0, ()): (0.0, 0, ())}))
        for pid in phonemes:
            nxt: dict[_Key, _Entry] = {}

            def offer(key: _Key, entry: _Entry):
                cur = nxt.get(key)
                if cur is None or entry[0] > cur[0]:
                    nxt[key] = entry

            for (node, ctx), (score, matched, words) in states.items():
                # insertion: hypothesis phoneme unexplained by the lexicon
                offer((node, ctx), (score - self.edit_penalty, matched, words))
                for arc_pid, child in self.trie.children[node].items():
                    if arc_pid == pid:
                        offer((child, ctx), (score, matched + 1, words))
                    else:
                        offer((child, ctx), (score - self.edit_penalty, matched, words))
            states = prune(self.epsilon_closure(nxt))

        best: _Entry | None = None
        for (node, ctx), (score, matched, words) in states.items():
            if node != 0:
                continue
            final = (score + self.lm_logp(None, ctx), matched, words)
            if best is None or final[0] > best[0] or (final[0] == best[0] and final[2] < best[2]):
                best = final
        if best is None:
            return None, pruned
        return (
            WordDecodeResult(
                words=list(best[2]),
                score=best[0],
                matched=best[1],
                no_path=(best[1] == 0 and len(phonemes) > 0),
            ),
            pruned,
        )


def phonemes_to_words(
    phonemes: list[int],
    lexicon: Lexicon,
    phoneme_vocab: Vocab,
    word_lm=None,
    beam: int = 16,
    lm_weight: float = 1.0,
    word_score: float = -0.5,
    edit_penalty: float = 1.0,
    lm_order: int = 4,
) -> WordDecodeResult:
    """Best word sequence explaining a silence-free phoneme stream.

    Monotone in `beam`: the result is the best over all widths <= beam.
    """
    if not lexicon:
        raise ValueError("empty lexicon")
    if beam < 1:
        raise ValueError("beam must be >= 1")
    trie = LexiconTrie(lexicon, phoneme_vocab)
    # an all-deletion word emission cycle must strictly lower the score,
    # otherwise epsilon closure would not terminate
    if word_score >= trie.min_pron_len * edit_penalty:
        raise ValueError("word_score must be < min pronunciation length * edit_penalty")
    phonemes = [p for p in phonemes if p != SIL]
    search = _Search(trie, word_lm, lm_weight, word_score, edit_penalty, max(0, lm_order - 1))

    best: WordDecodeResult | None = None
    for width in range(1, beam + 1):
        result, pruned = search.run(phonemes, width)
        if result is not None and (best is None or result.score > best.score):
            best = result
        if not pruned:  # this width was exact; wider ones would repeat it
            break
    if best is None:
        # only possible when even the widest run kept no root state
        return WordDecodeResult(words=[], score=float("-inf"), matched=0, no_path=len(phonemes) > 0)
    return best
