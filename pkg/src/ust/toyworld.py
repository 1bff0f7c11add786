"""Synthetic closed-loop benchmark: paired languages, toy grammar, speech.

A world holds two languages whose lexicons are aligned rank-for-rank by a
hidden bijection. Sentences come from a class grammar (word class depends
on position, Zipf weights within class), so translation is word mapping
plus a fixed order rule. "Speech" renders each phoneme (and inter-word
silence) as a prototype vector repeated a few frames plus Gaussian noise.

Everything derived from the bijection (pairings, class table, weights,
prototype tables, transcripts) is written under gold/ and only reachable
through guard-checked accessors.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import CorpusManifest, Utterance, load_manifest, save_features, save_text_corpus
from .errors import InvalidSpecError, IoError
from .guard import assert_gold_allowed
from .kmeans import Codebook, load_codebook, save_codebook
from .textnorm import normalize_text
from .vocab import Vocab, build_vocab

_LETTERS = "abcdefghijklmnopqrstuvwxyz"
ORDER_RULES = ("identity", "reverse", "rotate1", "swap_pairs")


@dataclass
class ToyWorldSpec:
    phoneme_inventory_size: int = 12
    lexicon_size: int = 50
    frames_per_phoneme: tuple[int, int] = (2, 4)
    noise_std: float = 0.1
    prototype_dim: int = 16
    word_order_rule: str = "reverse"
    seed: int = 0
    # grammar shape
    word_classes: int = 4
    word_len: tuple[int, int] = (2, 5)
    sentence_len: tuple[int, int] = (3, 8)
    zipf_exponent: float = 0.8
    comma_min_len: int = 5
    # corpus sizes
    n_speech_train: int = 300
    n_speech_valid: int = 40
    n_speech_test: int = 40
    n_tgt_speech_train: int = 250
    n_tgt_speech_valid: int = 30
    n_text: int = 500
    n_mt_test: int = 120
    # optional prototype-domain shift (adaptation studies)
    prototype_rotation: float = 0.0
    prototype_scale: float = 1.0
    prototype_bias: float = 0.0
    # recorded for documentation parity; no waveform DSP happens here
    sample_rate: int = 22050
    fft_size: int = 1024
    window_length: int = 1024
    hop_length: int = 256

    def validate(self) -> None:
        checks = [
            (2 <= self.phoneme_inventory_size <= len(_LETTERS), "phoneme inventory in 2..26"),
            (self.lexicon_size >= self.word_classes >= 1, "lexicon >= classes >= 1"),
            (1 <= self.frames_per_phoneme[0] <= self.frames_per_phoneme[1], "frames range"),
            (self.noise_std >= 0, "noise_std >= 0"),
            (self.prototype_dim >= self.phoneme_inventory_size + 1, "dim >= inventory + 1"),
            (self.word_order_rule in ORDER_RULES, f"order rule in {ORDER_RULES}"),
            (1 <= self.word_len[0] <= self.word_len[1], "word length range"),
            (1 <= self.sentence_len[0] <= self.sentence_len[1], "sentence length range"),
            (min(self.n_speech_train, self.n_speech_valid, self.n_speech_test) >= 1, "speech sizes"),
            (self.n_text >= 1 and self.n_mt_test >= 1, "text sizes"),
            (self.prototype_scale > 0, "prototype_scale > 0"),
        ]
        for ok, what in checks:
            if not ok:
                raise InvalidSpecError(what)


def apply_order_rule(items: list, rule: str) -> list:
    if rule == "identity":
        return list(items)
    if rule == "reverse":
        return list(reversed(items))
    if rule == "rotate1":
        return list(items[1:]) + list(items[:1]) if len(items) > 1 else list(items)
    if rule == "swap_pairs":
        out = list(items)
        for i in range(0, len(out) - 1, 2):
            out[i], out[i + 1] = out[i + 1], out[i]
        return out
    raise InvalidSpecError(f"unknown order rule {rule!r}")


def format_raw(words: list[str], comma_min_len: int) -> str:
    """Deterministic written form: Capitalized first word, optional comma
    after it for long sentences, period on the last word."""
    w = list(words)
    if len(w) >= comma_min_len:
        w[0] += ","
    w[-1] += "."
    w[0] = w[0][0].upper() + w[0][1:]
    return " ".join(w)


def _sample_pronunciations(rng, symbols, n_words, word_len) -> list[tuple[str, ...]]:
    seen = set()
    prons = []
    while len(prons) < n_words:
        length = int(rng.integers(word_len[0], word_len[1] + 1))
        pron = []
        for _ in range(length):
            choices = [s for s in symbols if not pron or s != pron[-1]]
            pron.append(choices[int(rng.integers(len(choices)))])
        tup = tuple(pron)
        if tup not in seen:
            seen.add(tup)
            prons.append(tup)
    return prons


def _prototypes(rng, n: int, dim: int) -> np.ndarray:
    # orthonormal rows scaled to norm sqrt(dim): pairwise distance sqrt(2*dim)
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    return (q[:n] * math.sqrt(dim)).astype(np.float32)


def _shift_prototypes(protos: np.ndarray, spec: ToyWorldSpec, rng) -> np.ndarray:
    out = protos.astype(np.float64)
    theta = spec.prototype_rotation
    if theta != 0.0:
        dim = out.shape[1]
        perm = rng.permutation(dim)
        c, s = math.cos(theta), math.sin(theta)
        for i in range(0, dim - 1, 2):
            a, b = perm[i], perm[i + 1]
            xa, xb = out[:, a].copy(), out[:, b].copy()
            out[:, a] = c * xa - s * xb
            out[:, b] = s * xa + c * xb
    out = out * spec.prototype_scale
    if spec.prototype_bias != 0.0:
        out = out + spec.prototype_bias
    return out.astype(np.float32)


@dataclass
class LanguageMeta:
    name: str
    phoneme_symbols: list[str]
    lexicon: dict[str, list[str]]  # spelling -> phoneme symbols

    @property
    def phoneme_vocab(self) -> Vocab:
        return build_vocab(self.phoneme_symbols)

    @property
    def words(self) -> list[str]:
        return sorted(self.lexicon)


class ToyWorld:
    """Read view over a generated world directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        meta_path = self.root / "META.json"
        if not meta_path.is_file():
            raise IoError(f"not a toy world: {meta_path} missing")
        self.meta = json.loads(meta_path.read_text(encoding="utf-8"))

    # -- public (training-visible) surface ---------------------------------

    def language(self, lang: str) -> LanguageMeta:
        entry = self.meta["languages"][lang]
        return LanguageMeta(
            name=lang,
            phoneme_symbols=list(entry["phonemes"]),
            lexicon={w: list(p) for w, p in entry["lexicon"].items()},
        )

    def manifest(self, lang: str, split: str) -> CorpusManifest:
        return load_manifest(
            self.root / "manifests" / f"{lang}_{split}.tsv", split=split, language=lang
        )

    def text_corpus(self, lang: str) -> list[str]:
        from .data import load_text_corpus

        return load_text_corpus(self.root / "text" / f"{lang}_text.txt")

    @property
    def feature_dim(self) -> int:
        return int(self.meta["feature_dim"])

    # -- gold (evaluation-only) surface -------------------------------------

    def _gold_tsv(self, name: str) -> list[list[str]]:
        assert_gold_allowed(name)
        path = self.root / "gold" / name
        if not path.is_file():
            raise IoError(f"gold file missing: {path}")
        return [line.split("\t") for line in path.read_text(encoding="utf-8").splitlines() if line]

    def gold_transcripts(self, lang: str, split: str) -> dict[str, tuple[str, str]]:
        return {r[0]: (r[1], r[2]) for r in self._gold_tsv(f"transcripts_{lang}_{split}.tsv")}

    def gold_phonemes(self, lang: str, split: str) -> dict[str, list[str]]:
        return {r[0]: r[1].split() for r in self._gold_tsv(f"phonemes_{lang}_{split}.tsv")}

    def gold_speech_bitext(self, split: str) -> dict[str, tuple[str, str]]:
        return {r[0]: (r[1], r[2]) for r in self._gold_tsv(f"bitext_speech_{split}.tsv")}

    def gold_text_bitext(self) -> list[tuple[str, str, str, str]]:
        return [tuple(r) for r in self._gold_tsv("bitext_text.tsv")]

    def gold_prototypes(self, lang: str) -> tuple[np.ndarray, list[str]]:
        """Prototype table: row per symbol, row 0 is <sil>."""
        assert_gold_allowed(f"prototypes_{lang}")
        cb = load_codebook(self.root / "gold" / f"prototypes_{lang}.bin")
        syms = (self.root / "gold" / f"prototypes_{lang}.syms").read_text(encoding="utf-8").split()
        return cb.centroids, syms

    def _secret(self) -> dict:
        assert_gold_allowed("world_secret")
        return json.loads((self.root / "gold" / "world_secret.json").read_text(encoding="utf-8"))

    def gold_translate_norm(self, norm_text: str) -> str:
        """Reference translation of a normalized source sentence."""
        secret = self._secret()
        mapping = dict(zip(secret["src_rank_order"], secret["tgt_rank_order"]))
        words = [mapping[w] for w in norm_text.split()]
        return " ".join(apply_order_rule(words, self.meta["word_order_rule"]))

    def sample_domain_text(self, skew: float, n: int, seed: int) -> list[str]:
        """Evaluation-only target-language text with skewed word weights.

        skew 0 reproduces the training distribution; skew 1 flips the
        within-class Zipf weights toward the rarest words.
        """
        secret = self._secret()
        rng = np.random.default_rng(seed)
        grammar = _Grammar.from_secret(self.meta, secret)
        lines = []
        for _ in range(n):
            ranks = grammar.sample_sentence(rng, skew=skew)
            words = [secret["tgt_rank_order"][r] for r in ranks]
            lines.append(format_raw(words, self.meta["comma_min_len"]))
        return lines


class _Grammar:
    def __init__(self, n_words: int, n_classes: int, zipf_exponent: float, sentence_len: tuple[int, int]):
        self.n_words = n_words
        self.n_classes = n_classes
        self.sentence_len = sentence_len
        weights = np.array([1.0 / (r + 1) ** zipf_exponent for r in range(n_words)])
        self.class_members: list[np.ndarray] = []
        self.class_weights: list[np.ndarray] = []
        for c in range(n_classes):
            members = np.arange(c, n_words, n_classes)
            w = weights[members]
            self.class_members.append(members)
            self.class_weights.append(w / w.sum())

    @classmethod
    def from_secret(cls, meta: dict, secret: dict) -> "_Grammar":
        return cls(
            n_words=len(secret["src_rank_order"]),
            n_classes=secret["word_classes"],
            zipf_exponent=secret["zipf_exponent"],
            sentence_len=tuple(meta["sentence_len"]),
        )

    def sample_sentence(self, rng, skew: float = 0.0) -> list[int]:
        lo, hi = self.sentence_len
        length = int(rng.integers(lo, hi + 1))
        ranks = []
        for j in range(length):
            c = j % self.n_classes
            w = self.class_weights[c]
            if skew:
                w = (1.0 - skew) * w + skew * w[::-1]
                w = w / w.sum()
            ranks.append(int(rng.choice(self.class_members[c], p=w)))
        return ranks


def _render_speech(
    rng, phon_syms: list[str], protos: np.ndarray, proto_index: dict[str, int], spec: ToyWorldSpec
) -> np.ndarray:
    lo, hi = spec.frames_per_phoneme
    chunks = []
    for sym in phon_syms:
        n = int(rng.integers(lo, hi + 1))
        base = protos[proto_index[sym]]
        noise = spec.noise_std * rng.standard_normal((n, protos.shape[1]))
        chunks.append(base + noise)
    return np.concatenate(chunks, axis=0).astype(np.float32)


def _utt_phonemes(words: list[str], lexicon: dict[str, list[str]]) -> list[str]:
    out: list[str] = []
    for i, w in enumerate(words):
        if i > 0:
            out.append("<sil>")
        out.extend(lexicon[w])
    return out


def generate_toy_world(spec: ToyWorldSpec, out_dir: str | Path) -> ToyWorld:
    """Generate a world on disk. Deterministic per spec (byte-identical)."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    root = Path(out_dir)
    for sub in ("manifests", "features", "text", "gold"):
        (root / sub).mkdir(parents=True, exist_ok=True)

    src_syms = list(_LETTERS[: spec.phoneme_inventory_size])
    tgt_syms = list(_LETTERS[::-1][: spec.phoneme_inventory_size])

    src_prons = _sample_pronunciations(rng, src_syms, spec.lexicon_size, spec.word_len)
    tgt_prons = _sample_pronunciations(rng, tgt_syms, spec.lexicon_size, spec.word_len)
    src_rank_order = ["".join(p) for p in src_prons]
    tgt_rank_order = ["".join(p) for p in tgt_prons]
    src_lexicon = {w: list(p) for w, p in zip(src_rank_order, src_prons)}
    tgt_lexicon = {w: list(p) for w, p in zip(tgt_rank_order, tgt_prons)}

    grammar = _Grammar(spec.lexicon_size, spec.word_classes, spec.zipf_exponent, spec.sentence_len)

    src_protos = _shift_prototypes(
        _prototypes(rng, spec.phoneme_inventory_size + 1, spec.prototype_dim), spec, rng
    )
    tgt_protos_base = _prototypes(rng, spec.phoneme_inventory_size + 1, spec.prototype_dim)
    tgt_protos = _shift_prototypes(tgt_protos_base, spec, rng)
    src_index = {s: i + 1 for i, s in enumerate(src_syms)}
    src_index["<sil>"] = 0
    tgt_index = {s: i + 1 for i, s in enumerate(tgt_syms)}
    tgt_index["<sil>"] = 0

    def src_words_of(ranks: list[int]) -> list[str]:
        return [src_rank_order[r] for r in ranks]

    def tgt_words_of(ranks: list[int]) -> list[str]:
        return apply_order_rule([tgt_rank_order[r] for r in ranks], spec.word_order_rule)

    # unpaired text: two disjoint pools of sentences
    src_text = [format_raw(src_words_of(grammar.sample_sentence(rng)), spec.comma_min_len) for _ in range(spec.n_text)]
    tgt_text = [format_raw(tgt_words_of(grammar.sample_sentence(rng)), spec.comma_min_len) for _ in range(spec.n_text)]
    save_text_corpus(src_text, root / "text" / "src_text.txt")
    save_text_corpus(tgt_text, root / "text" / "tgt_text.txt")

    # held-out gold bitext for MT evaluation
    bitext_rows = []
    for _ in range(spec.n_mt_test):
        ranks = grammar.sample_sentence(rng)
        sw, tw = src_words_of(ranks), tgt_words_of(ranks)
        bitext_rows.append(
            "\t".join([format_raw(sw, spec.comma_min_len), format_raw(tw, spec.comma_min_len), " ".join(sw), " ".join(tw)])
        )
    (root / "gold" / "bitext_text.tsv").write_text("".join(r + "\n" for r in bitext_rows), encoding="utf-8")

    def emit_speech(lang: str, split: str, count: int, lexicon, rank_order, words_of, protos, proto_index, with_bitext: bool):
        records: list[Utterance] = []
        transcripts, phoneme_rows, bitext = [], [], []
        for i in range(count):
            ranks = grammar.sample_sentence(rng)
            words = [rank_order[r] for r in ranks] if lang == "src" else words_of(ranks)
            norm = " ".join(words)
            raw = format_raw(words, spec.comma_min_len)
            phons = _utt_phonemes(words, lexicon)
            utt_id = f"{lang}-{split}-{i:04d}"
            feat_rel = f"../features/{utt_id}.bin"
            save_features(root / "features" / f"{utt_id}.bin", _render_speech(rng, phons, protos, proto_index, spec))
            records.append(Utterance(id=utt_id, feature_path=feat_rel))
            transcripts.append(f"{utt_id}\t{raw}\t{norm}")
            phoneme_rows.append(f"{utt_id}\t{' '.join(phons)}")
            if with_bitext:
                tw = tgt_words_of(ranks)
                bitext.append(f"{utt_id}\t{format_raw(tw, spec.comma_min_len)}\t{' '.join(tw)}")
        from .data import save_manifest

        save_manifest(
            CorpusManifest(records, split=split, language=lang, root=root / "manifests"),
            root / "manifests" / f"{lang}_{split}.tsv",
        )
        (root / "gold" / f"transcripts_{lang}_{split}.tsv").write_text(
            "".join(r + "\n" for r in transcripts), encoding="utf-8"
        )
        (root / "gold" / f"phonemes_{lang}_{split}.tsv").write_text(
            "".join(r + "\n" for r in phoneme_rows), encoding="utf-8"
        )
        if with_bitext:
            (root / "gold" / f"bitext_speech_{split}.tsv").write_text(
                "".join(r + "\n" for r in bitext), encoding="utf-8"
            )

    emit_speech("src", "train", spec.n_speech_train, src_lexicon, src_rank_order, tgt_words_of, src_protos, src_index, True)
    emit_speech("src", "valid", spec.n_speech_valid, src_lexicon, src_rank_order, tgt_words_of, src_protos, src_index, True)
    emit_speech("src", "test", spec.n_speech_test, src_lexicon, src_rank_order, tgt_words_of, src_protos, src_index, True)
    emit_speech("tgt", "train", spec.n_tgt_speech_train, tgt_lexicon, tgt_rank_order, tgt_words_of, tgt_protos, tgt_index, False)
    emit_speech("tgt", "valid", spec.n_tgt_speech_valid, tgt_lexicon, tgt_rank_order, tgt_words_of, tgt_protos, tgt_index, False)

    save_codebook(Codebook(src_protos), root / "gold" / "prototypes_src.bin")
    save_codebook(Codebook(tgt_protos), root / "gold" / "prototypes_tgt.bin")
    (root / "gold" / "prototypes_src.syms").write_text(" ".join(["<sil>"] + src_syms) + "\n", encoding="utf-8")
    (root / "gold" / "prototypes_tgt.syms").write_text(" ".join(["<sil>"] + tgt_syms) + "\n", encoding="utf-8")

    secret = {
        "src_rank_order": src_rank_order,
        "tgt_rank_order": tgt_rank_order,
        "word_classes": spec.word_classes,
        "zipf_exponent": spec.zipf_exponent,
    }
    (root / "gold" / "world_secret.json").write_text(
        json.dumps(secret, sort_keys=True, indent=1), encoding="utf-8"
    )

    meta = {
        "version": 1,
        "feature_dim": spec.prototype_dim,
        "word_order_rule": spec.word_order_rule,
        "comma_min_len": spec.comma_min_len,
        "sentence_len": list(spec.sentence_len),
        "frames_per_phoneme": list(spec.frames_per_phoneme),
        "noise_std": spec.noise_std,
        "spec": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(spec).items()},
        "languages": {
            "src": {"phonemes": src_syms, "lexicon": {w: src_lexicon[w] for w in sorted(src_lexicon)}},
            "tgt": {"phonemes": tgt_syms, "lexicon": {w: tgt_lexicon[w] for w in sorted(tgt_lexicon)}},
        },
        "audio_config": {
            "sample_rate": spec.sample_rate,
            "fft_size": spec.fft_size,
            "window_length": spec.window_length,
            "hop_length": spec.hop_length,
        },
    }
    (root / "META.json").write_text(json.dumps(meta, sort_keys=True, indent=1), encoding="utf-8")
    return ToyWorld(root)
