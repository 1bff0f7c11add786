"""CLI stage implementations.

Each stage reads inputs resolved against the workspace root, writes all
artifacts under its own output directory, and returns a flat metrics
dict. File inputs are recorded on the context for the provenance
manifest; training stages must never record (or reach) gold/ paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import report as rpt
from .config import RunConfig
from .data import CorpusManifest, load_text_corpus
from .errors import ConfigError
from .lm import NGramLanguageModel, train_lm
from .metrics import corpus_bleu, corpus_edit_rate, edit_rate, jsd_4gram, spearman, token_accuracy
from .oracle import OracleAsr
from .pipeline.pseudo import load_pseudo_pairs, pseudo_label_s2st, pseudo_label_s2tt, save_pseudo_pairs
from .pipeline.students import StudentConfig, StudentS2ST, StudentS2TT, train_student_s2st, train_student_s2tt
from .speech import AdaptConfig, SpeechEncoder, adapt_encoder, extract_corpus
from .serialize import (
    load_asr, load_encoder, load_generator, load_seq2seq, load_tdn, load_tts,
    save_asr, save_encoder, save_generator, save_seq2seq, save_tdn, save_tts,
)
from .checkpoints import Checkpoint, module_to_params, params_into_module, save_checkpoint, load_checkpoint
from .errors import MalformedError
from .textnorm import normalize_text, phonemize, strip_silence
from .toyworld import ToyWorld, ToyWorldSpec, generate_toy_world
from .tts.model import SynthesisConfig, synthesize
from .tts.train import TtsTrainConfig, train_tts
from .uasr.decode import decode_phonemes, phonemes_to_words
from .uasr.selftrain import SelfTrainConfig, self_train_ctc
from .uasr.train import UasrConfig, UasrLossWeights, train_uasr
from .umt.model import ToySeq2Seq, encode_line, lang_tag, translate
from .umt.noise import NoiseConfig
from .umt.tdn import TdnConfig, denormalize, train_tdn
from .umt.train import ObtSchedule, UmtConfig, UmtCorpus, pretrain_dae, train_obt
from .vocab import SIL, Vocab


@dataclass
class StageContext:
    cfg: RunConfig
    workspace: Path
    out: Path
    inputs: list[Path] = field(default_factory=list)

    def path(self, key: str, required: bool = True) -> Path | None:
        raw = str(self.cfg[key])
        if not raw:
            if required:
                raise ConfigError(f"stage {self.cfg.stage!r} requires {key}")
            return None
        p = (self.workspace / raw).resolve()
        self.record(p)
        return p

    def record(self, p: Path) -> None:
        if p not in self.inputs:
            self.inputs.append(p)


# -- shared helpers ----------------------------------------------------------


def _world(ctx: StageContext) -> ToyWorld:
    root = ctx.path("paths.world")
    world = ToyWorld(root)
    ctx.record(root / "META.json")
    return world


def _speech(world: ToyWorld, ctx: StageContext, lang: str, split: str, limit: int = 0) -> CorpusManifest:
    manifest = world.manifest(lang, split)
    ctx.record(world.root / "manifests" / f"{lang}_{split}.tsv")
    if limit and limit < len(manifest):
        manifest = manifest.subset(list(range(limit)))
    return manifest


def _norm_text(world: ToyWorld, ctx: StageContext, lang: str) -> list[str]:
    ctx.record(world.root / "text" / f"{lang}_text.txt")
    return [normalize_text(line) for line in world.text_corpus(lang)]


def _phoneme_lm(world: ToyWorld, ctx: StageContext, lang: str, order: int) -> NGramLanguageModel:
    """Phoneme LM over silence-stripped phonemized text (decoded output
    carries no silence)."""
    lex = world.language(lang)
    corpus = []
    for line in _norm_text(world, ctx, lang):
        ids = strip_silence(phonemize(line, lex.lexicon, lex.phoneme_vocab))
        corpus.append([lex.phoneme_vocab.symbol(i) for i in ids])
    return train_lm(corpus, order=order)


def _word_lm(world: ToyWorld, ctx: StageContext, lang: str, order: int) -> NGramLanguageModel:
    return train_lm([line.split() for line in _norm_text(world, ctx, lang)], order=order)


def _decoder_kwargs(cfg: RunConfig) -> dict:
    return dict(
        beam=cfg["decode.beam"], lm_weight=cfg["decode.lm_weight"], word_score=cfg["decode.word_score"]
    )


def _transcriber(ctx: StageContext, world: ToyWorld, asr, lang: str):
    lex = world.language(lang)
    word_lm = _word_lm(world, ctx, lang, ctx.cfg["decode.word_lm_order"])
    kw = _decoder_kwargs(ctx.cfg)

    def fn(feats: np.ndarray) -> str:
        return asr.transcribe(feats, lex.lexicon, word_lm=word_lm, **kw)

    return fn


def _oracle_asr(ctx: StageContext, world: ToyWorld, lang: str) -> OracleAsr:
    protos, syms = world.gold_prototypes(lang)
    ctx.record(world.root / "gold" / f"prototypes_{lang}.bin")
    lex = world.language(lang)
    word_lm = _word_lm(world, ctx, lang, ctx.cfg["decode.word_lm_order"])
    return OracleAsr(
        protos, syms, lex.phoneme_vocab, lex.lexicon, word_lm=word_lm,
        beam=ctx.cfg["decode.beam"], lm_weight=ctx.cfg["decode.lm_weight"],
        word_score=ctx.cfg["decode.word_score"],
    )


def _gold_phoneme_refs(world: ToyWorld, ctx: StageContext, lang: str, split: str, manifest) -> list[list[int]]:
    ctx.record(world.root / "gold" / f"phonemes_{lang}_{split}.tsv")
    gold = world.gold_phonemes(lang, split)
    vocab = world.language(lang).phoneme_vocab
    return [strip_silence([vocab.id(s) for s in gold[rec.id]]) for rec in manifest]


# -- stages ------------------------------------------------------------------


def stage_gen_world(ctx: StageContext) -> dict:
    c = ctx.cfg
    spec = ToyWorldSpec(
        phoneme_inventory_size=c["world.phoneme_inventory"],
        lexicon_size=c["world.lexicon_size"],
        frames_per_phoneme=(c["world.frames_per_phoneme_min"], c["world.frames_per_phoneme_max"]),
        noise_std=c["world.noise_std"],
        prototype_dim=c["world.prototype_dim"],
        word_order_rule=c["world.word_order_rule"],
        seed=c["seed"],
        word_classes=c["world.word_classes"],
        word_len=(c["world.word_len_min"], c["world.word_len_max"]),
        sentence_len=(c["world.sentence_len_min"], c["world.sentence_len_max"]),
        zipf_exponent=c["world.zipf_exponent"],
        comma_min_len=c["world.comma_min_len"],
        n_speech_train=c["world.n_speech_train"],
        n_speech_valid=c["world.n_speech_valid"],
        n_speech_test=c["world.n_speech_test"],
        n_tgt_speech_train=c["world.n_tgt_speech_train"],
        n_tgt_speech_valid=c["world.n_tgt_speech_valid"],
        n_text=c["world.n_text"],
        n_mt_test=c["world.n_mt_test"],
        prototype_rotation=c["world.prototype_rotation"],
        prototype_scale=c["world.prototype_scale"],
        prototype_bias=c["world.prototype_bias"],
        sample_rate=c["audio.sample_rate"],
        fft_size=c["audio.fft_size"],
        window_length=c["audio.window_length"],
        hop_length=c["audio.hop_length"],
    )
    world = generate_toy_world(spec, ctx.out)
    return {
        "feature_dim": world.feature_dim,
        "lexicon_size": spec.lexicon_size,
        "src_lexicon_words": len(world.language("src").lexicon),
        "tgt_lexicon_words": len(world.language("tgt").lexicon),
        "speech_train": spec.n_speech_train,
        "text_sentences": spec.n_text,
    }


def stage_adapt(ctx: StageContext) -> dict:
    c = ctx.cfg
    world = _world(ctx)
    lang, split = c["adapt.language"], c["adapt.split"]
    manifest = _speech(world, ctx, lang, split)
    enc_path = ctx.path("paths.encoder", required=False)
    torch.manual_seed(c["seed"])
    encoder = load_encoder(enc_path) if enc_path else SpeechEncoder(
        world.feature_dim, c["encoder.layers"], c["encoder.kernel"]
    )
    acfg = AdaptConfig(
        kmeans_clusters=c["adapt.kmeans_clusters"], kmeans_iters=c["adapt.kmeans_iters"],
        extract_layer=c["adapt.extract_layer"], steps=c["adapt.steps"],
        batch_size=c["adapt.batch_size"], lr=c["adapt.lr"],
        freeze_steps=c["adapt.freeze_steps"], holdout=c["adapt.holdout"], seed=c["seed"],
    )
    result = adapt_encoder(encoder, manifest, min(acfg.kmeans_clusters, sum(1 for _ in manifest) * 4), acfg)
    save_encoder(result.encoder, ctx.out / "encoder.ckpt", language=lang)
    rpt.save_curves(ctx.out / "adapt_ctc.png", {"ctc": result.ctc_curve}, "adaptation CTC loss")
    return {
        "ctc_first": result.ctc_curve[0] if result.ctc_curve else float("nan"),
        "ctc_last": result.ctc_curve[-1] if result.ctc_curve else float("nan"),
        "holdout_first": result.holdout_curve[0],
        "holdout_last": result.holdout_curve[-1],
        "kmeans_clusters": result.codebook.k,
    }


def stage_train_uasr(ctx: StageContext) -> dict:
    c = ctx.cfg
    world = _world(ctx)
    lang = c["uasr.language"]
    encoder = load_encoder(ctx.path("paths.encoder"))
    layer = c["adapt.extract_layer"]
    train_m = _speech(world, ctx, lang, "train")
    valid_m = _speech(world, ctx, lang, "valid")
    feats = extract_corpus(encoder, train_m.load_all(), layer)
    valid_feats = extract_corpus(encoder, valid_m.load_all(), layer)
    lex = world.language(lang)
    text_phonemes = [
        phonemize(line, lex.lexicon, lex.phoneme_vocab) for line in _norm_text(world, ctx, lang)
    ]
    phoneme_lm = _phoneme_lm(world, ctx, lang, c["decode.phoneme_lm_order"])
    ucfg = UasrConfig(
        weights=UasrLossWeights(
            lambda_gp=c["uasr.lambda_gp"], gamma_sp=c["uasr.gamma_sp"], delta_pd=c["uasr.delta_pd"],
            eta_aux=c["uasr.eta_aux"], alpha_rdrop=c["uasr.alpha_rdrop"], sigma_noise=c["uasr.sigma_noise"],
        ),
        hidden=c["uasr.hidden"], input_dropout=c["uasr.input_dropout"],
        hidden_dropout=c["uasr.hidden_dropout"], aux_clusters=c["uasr.aux_clusters"],
        steps=c["uasr.steps"], batch_size=c["uasr.batch_size"], lr_g=c["uasr.lr_g"],
        lr_d=c["uasr.lr_d"], ckpt_interval=c["uasr.ckpt_interval"], seed=c["seed"],
    )
    result = train_uasr(feats, text_phonemes, valid_feats, phoneme_lm, lex.phoneme_vocab, ucfg)
    from .uasr.models import PhonemeClassMap

    cmap = PhonemeClassMap.from_vocab(lex.phoneme_vocab)
    save_generator(result.generator, cmap, lex.phoneme_symbols, ctx.out / "generator.ckpt", language=lang)
    phoneme_lm.to_arpa(ctx.out / "phoneme_lm.arpa")
    from .kmeans import save_codebook

    save_codebook(result.codebook, ctx.out / "aux_codebook.bin")
    rpt.save_curves(ctx.out / "uasr_losses.png", result.curves, "adversarial training")
    return {
        "selected_steps": ",".join(str(s) for s in result.selected_steps),
        "g_loss_last": result.curves["g_loss"][-1],
        "d_loss_last": result.curves["d_loss"][-1],
        "rdrop_last": result.curves["rdrop"][-1],
        "steps": ucfg.steps,
    }


def stage_self_train(ctx: StageContext) -> dict:
    c = ctx.cfg
    world = _world(ctx)
    lang = c["uasr.language"]
    encoder = load_encoder(ctx.path("paths.encoder"))
    gen, cmap, pvocab = load_generator(ctx.path("paths.generator"))
    layer = c["adapt.extract_layer"]
    train_m = _speech(world, ctx, lang, "train")
    raw_feats = train_m.load_all()
    gan_feats = extract_corpus(encoder, raw_feats, layer)
    pseudo = [decode_phonemes(gen, f, cmap) for f in gan_feats]
    scfg = SelfTrainConfig(
        steps=c["selftrain.steps"], batch_size=c["selftrain.batch_size"],
        lr=c["selftrain.lr"], holdout=c["selftrain.holdout"], seed=c["seed"],
    )
    result = self_train_ctc(encoder, raw_feats, pseudo, pvocab, scfg)
    save_asr(result.model, ctx.out / "asr.ckpt", language=lang)
    rpt.save_curves(ctx.out / "selftrain_ctc.png", {"ctc": result.train_curve}, "self-training CTC loss")
    return {
        "skipped_empty": result.skipped_empty,
        "skipped_too_long": result.skipped_too_long,
        "holdout_first": result.holdout_curve[0],
        "holdout_last": result.holdout_curve[-1],
    }


def _umt_cfg(c: RunConfig) -> UmtConfig:
    return UmtConfig(
        d_model=c["umt.d_model"], nhead=c["umt.nhead"], layers=c["umt.layers"], ffn=c["umt.ffn"],
        dropout=c["umt.dropout"], batch_size=c["umt.batch_size"], lr=c["umt.lr"],
        dae_steps=c["umt.dae_steps"],
        noise=NoiseConfig(
            span_mask_prob=c["umt.span_mask_prob"], span_length_lambda=c["umt.span_length_lambda"],
            sentence_permute=c["umt.sentence_permute"],
        ),
        schedule=ObtSchedule(
            vocab_mask_frac=c["umt.vocab_mask_frac"], vocab_mask_steps=c["umt.vocab_mask_steps"],
            total_steps=c["umt.obt_steps"],
        ),
        ckpt_interval=c["umt.ckpt_interval"], average_last=c["umt.average_last"],
        bt_max_len=c["umt.bt_max_len"], holdout=c["umt.holdout"], seed=c["seed"],
    )


def stage_train_umt(ctx: StageContext) -> dict:
    c = ctx.cfg
    world = _world(ctx)
    ctx.record(world.root / "text" / "src_text.txt")
    ctx.record(world.root / "text" / "tgt_text.txt")
    corpora = {"src": world.text_corpus("src"), "tgt": world.text_corpus("tgt")}
    corpus = UmtCorpus(corpora, holdout=c["umt.holdout"])
    ucfg = _umt_cfg(c)
    torch.manual_seed(c["seed"])
    model = ToySeq2Seq(
        len(corpus.vocab), d_model=ucfg.d_model, nhead=ucfg.nhead, num_layers=ucfg.layers,
        ffn=ucfg.ffn, dropout=ucfg.dropout,
    )
    dae_curves = pretrain_dae(model, corpus, ucfg)
    save_seq2seq(model, corpus.vocab, ctx.out / "dae.ckpt", kind="seq2seq", langs=corpus.langs)
    obt_curves = train_obt(model, corpus, ucfg)
    save_seq2seq(model, corpus.vocab, ctx.out / "mt.ckpt", kind="seq2seq", langs=corpus.langs)
    rpt.save_curves(ctx.out / "umt_losses.png", {**dae_curves, **obt_curves}, "unsupervised MT")
    return {
        "dae_valid_first": dae_curves["dae_valid"][0],
        "dae_valid_last": dae_curves["dae_valid"][-1],
        "obt_loss_last": obt_curves["obt_loss"][-1],
        "vocab_size": len(corpus.vocab),
    }


def stage_train_tdn(ctx: StageContext) -> dict:
    c = ctx.cfg
    world = _world(ctx)
    lang = c["tdn.language"]
    ctx.record(world.root / "text" / f"{lang}_text.txt")
    raw_lines = world.text_corpus(lang)
    tcfg = TdnConfig(
        d_model=c["tdn.d_model"], nhead=c["tdn.nhead"], layers=c["tdn.layers"], ffn=c["tdn.ffn"],
        dropout=c["tdn.dropout"], batch_size=c["tdn.batch_size"], lr=c["tdn.lr"],
        steps=c["tdn.steps"], holdout=c["tdn.holdout"], seed=c["seed"],
    )
    tdn = train_tdn(raw_lines, tcfg)
    save_tdn(tdn, ctx.out / "tdn.ckpt", language=lang)
    rpt.save_curves(ctx.out / "tdn_loss.png", tdn.curves, "TDN training")
    return {
        "tdn_loss_last": tdn.curves["tdn_loss"][-1],
        "tdn_valid": tdn.curves.get("tdn_valid", [float("nan")])[-1],
        "pairs": len(raw_lines),
    }


def stage_train_tts(ctx: StageContext) -> dict:
    c = ctx.cfg
    world = _world(ctx)
    lang = c["tts.language"]
    asr = load_asr(ctx.path("paths.asr"))
    manifest = _speech(world, ctx, lang, "train")
    feats = manifest.load_all()
    pairs = []
    skipped = 0
    for f in feats:
        labels = asr.decode_phoneme_ids(f)
        if labels:
            pairs.append((labels, f))
        else:
            skipped += 1
    tcfg = TtsTrainConfig(
        d_model=c["tts.d_model"], nhead=c["tts.nhead"], layers=c["tts.layers"], ffn=c["tts.ffn"],
        dropout=c["tts.dropout"], prenet_dropout=c["tts.prenet_dropout"],
        alpha_consistency=c["tts.alpha_consistency"], stop_pos_weight=c["tts.stop_pos_weight"],
        steps=c["tts.steps"], batch_size=c["tts.batch_size"], lr=c["tts.lr"],
        ckpt_interval=c["tts.ckpt_interval"], average_last=c["tts.average_last"],
        holdout=c["tts.holdout"], seed=c["seed"],
    )
    vocab = world.language(lang).phoneme_vocab
    result = train_tts(pairs, len(vocab), world.feature_dim, tcfg)
    save_tts(result.model, ctx.out / "tts.ckpt", language=lang, alpha=tcfg.alpha_consistency)
    rpt.save_curves(ctx.out / "tts_loss.png", result.curves, "TTS training")
    return {
        "pairs": len(pairs),
        "skipped_empty_labels": skipped,
        "tts_loss_last": result.curves["tts_loss"][-1],
        "tts_valid_first": result.curves["tts_valid"][0],
        "tts_valid_last": result.curves["tts_valid"][-1],
    }


def _mt_translate_fn(model, vocab, beam: int, nbest: int):
    def fn(raw_text: str, n: int):
        return translate(model, vocab, raw_text, "src", "tgt", beam=max(beam, n), nbest=n)

    return fn


def stage_pseudo_label(ctx: StageContext) -> dict:
    c = ctx.cfg
    world = _world(ctx)
    asr = load_asr(ctx.path("paths.asr"))
    tdn = load_tdn(ctx.path("paths.tdn"))
    mt, mt_vocab = load_seq2seq(ctx.path("paths.mt"))
    kind = c["pseudo.kind"]
    tts_model = None
    if kind == "s2st":
        tts_model = load_tts(ctx.path("paths.tts"))
    elif kind != "s2tt":
        raise ConfigError(f"pseudo.kind must be s2tt or s2st, got {kind!r}")
    asr_fn = _transcriber(ctx, world, asr, "src")
    tdn_fn = lambda norm: denormalize(tdn, norm)
    mt_fn = _mt_translate_fn(mt, mt_vocab, c["umt.beam"], c["pseudo.nbest"])
    tgt_lex = world.language("tgt")
    syn_cfg = SynthesisConfig(max_frames=c["tts.max_frames"], stop_threshold=c["tts.stop_threshold"])
    tts_fn = (lambda ph: synthesize(tts_model, ph, syn_cfg).frames) if tts_model else None

    metrics: dict = {"kind": kind}
    for split in str(c["pseudo.splits"]).split(","):
        split = split.strip()
        manifest = _speech(world, ctx, "src", split, limit=c["pseudo.limit"] if split == "train" else 0)
        if kind == "s2tt":
            pairs, stats = pseudo_label_s2tt(manifest, asr_fn, tdn_fn, mt_fn, nbest=c["pseudo.nbest"])
        else:
            pairs, stats = pseudo_label_s2st(
                manifest, asr_fn, tdn_fn, mt_fn, tts_fn, tgt_lex.lexicon, tgt_lex.phoneme_vocab,
                nbest=c["pseudo.nbest"],
            )
        save_pseudo_pairs(pairs, ctx.out / split)
        metrics[f"{split}_emitted"] = stats.emitted
        for reason, count in sorted(stats.skipped.items()):
            metrics[f"{split}_skipped_{reason}"] = count
    return metrics


def _student_cfg(c: RunConfig) -> StudentConfig:
    return StudentConfig(
        d_model=c["student.d_model"], nhead=c["student.nhead"], layers=c["student.layers"],
        ffn=c["student.ffn"], dropout=c["student.dropout"], bridge_layers=c["student.bridge_layers"],
        prenet_dropout=c["student.prenet_dropout"], stop_pos_weight=c["student.stop_pos_weight"],
        steps=c["student.steps"], batch_size=c["student.batch_size"], lr=c["student.lr"],
        ckpt_interval=c["student.ckpt_interval"], average_best=c["student.average_best"],
        max_text_len=c["student.max_text_len"], seed=c["seed"],
    )


def _save_student(model, path, kind: str, vocab: Vocab, extra: dict) -> None:
    ckpt = Checkpoint(
        params=module_to_params(model),
        extra={
            "kind": kind, "arch": model.arch_info, "symbols": list(vocab.content_symbols), **extra,
        },
    )
    save_checkpoint(ckpt, path)


def load_student(path):
    from .vocab import build_vocab

    ckpt = load_checkpoint(path)
    kind = ckpt.extra.get("kind")
    arch = ckpt.extra["arch"]
    vocab = build_vocab(ckpt.extra["symbols"])
    encoder = SpeechEncoder(**arch["encoder"])
    scfg = StudentConfig(**arch["student"])
    if kind == "student_s2tt":
        model = StudentS2TT(encoder, arch["extract_layer"], vocab, scfg)
    elif kind == "student_s2st":
        model = StudentS2ST(encoder, arch["extract_layer"], vocab, arch["frame_dim"], scfg)
    else:
        raise MalformedError(f"{path}: not a student checkpoint")
    params_into_module(model, ckpt.params)
    return model, vocab


def _prepare_student(ctx: StageContext, s2st: bool):
    c = ctx.cfg
    torch.manual_seed(c["seed"])
    train_pairs = load_pseudo_pairs(ctx.path("paths.pairs"))
    valid_dir = ctx.path("paths.pairs_valid", required=False)
    valid_pairs = load_pseudo_pairs(valid_dir) if valid_dir else train_pairs[: max(1, len(train_pairs) // 10)]
    asr = load_asr(ctx.path("paths.asr"))
    mt, mt_vocab = load_seq2seq(ctx.path("paths.mt"))
    scfg = _student_cfg(c)
    if scfg.d_model != mt.d_model:
        raise ConfigError("student.d_model must match the MT model for decoder initialization")
    encoder = SpeechEncoder(**asr.encoder.arch)
    frame_dim = train_pairs[0].target_frames.shape[1] if s2st else None
    if s2st:
        model = StudentS2ST(encoder, encoder.n_layers, mt_vocab, frame_dim, scfg)
    else:
        model = StudentS2TT(encoder, encoder.n_layers, mt_vocab, scfg)
    if not c["student.random_init"]:
        model.init_encoder_from(asr.encoder, "w2vu2-ctc")
        model.init_decoder_from(mt, "mbart-obt")
    model.arch_info = {
        "encoder": encoder.arch,
        "student": {k: getattr(scfg, k) for k in scfg.__dataclass_fields__},
        "extract_layer": encoder.n_layers,
        "frame_dim": frame_dim,
    }
    encode_text = lambda text: encode_line(text, mt_vocab)
    start_id = mt_vocab.id(lang_tag("tgt"))
    return model, train_pairs, valid_pairs, encode_text, start_id, scfg, mt_vocab


def stage_train_student_s2tt(ctx: StageContext) -> dict:
    model, train_pairs, valid_pairs, encode_text, start_id, scfg, vocab = _prepare_student(ctx, s2st=False)
    result = train_student_s2tt(model, train_pairs, valid_pairs, encode_text, start_id, scfg)
    _save_student(model, ctx.out / "student.ckpt", "student_s2tt", vocab,
                  {"provenance": model.init_provenance, "selected_steps": result.selected_steps})
    rpt.save_curves(ctx.out / "student_loss.png", result.curves, "S2TT student")
    return {
        "train_pairs": len(train_pairs), "valid_pairs": len(valid_pairs),
        "valid_loss_first": result.curves["valid_loss"][0],
        "valid_loss_last": result.curves["valid_loss"][-1],
        "encoder_init": model.init_provenance["encoder"],
        "decoder_init": model.init_provenance["decoder"],
    }


def stage_train_student_s2st(ctx: StageContext) -> dict:
    model, train_pairs, valid_pairs, encode_text, start_id, scfg, vocab = _prepare_student(ctx, s2st=True)
    result = train_student_s2st(model, train_pairs, valid_pairs, encode_text, start_id, scfg)
    _save_student(model, ctx.out / "student.ckpt", "student_s2st", vocab,
                  {"provenance": model.init_provenance, "selected_steps": result.selected_steps})
    rpt.save_curves(ctx.out / "student_loss.png", result.curves, "S2ST student")
    return {
        "train_pairs": len(train_pairs), "valid_pairs": len(valid_pairs),
        "valid_loss_first": result.curves["valid_loss"][0],
        "valid_loss_last": result.curves["valid_loss"][-1],
        "encoder_init": model.init_provenance["encoder"],
        "decoder_init": model.init_provenance["decoder"],
    }


# -- evaluation --------------------------------------------------------------


def _bleu_pair(hyps_raw: list[str], refs_raw: list[str]) -> dict:
    hyp_tok = [h.split() for h in hyps_raw]
    ref_tok = [r.split() for r in refs_raw]
    norm_hyp = [normalize_text(h).split() for h in hyps_raw]
    norm_ref = [normalize_text(r).split() for r in refs_raw]
    return {
        "bleu_raw": corpus_bleu(hyp_tok, ref_tok),
        "bleu_norm": corpus_bleu(norm_hyp, norm_ref),
        "wer_norm": corpus_edit_rate(norm_hyp, norm_ref),
    }


def stage_evaluate(ctx: StageContext) -> dict:
    c = ctx.cfg
    kind = c["evaluate.kind"]
    fn = {
        "text": _eval_text,
        "asr": _eval_asr,
        "generator": _eval_generator,
        "mt": _eval_mt,
        "cascade-s2tt": _eval_cascade_s2tt,
        "cascade-s2st": _eval_cascade_s2st,
        "student-s2tt": _eval_student_s2tt,
        "student-s2st": _eval_student_s2st,
        "tts-resynthesis": _eval_tts_resynthesis,
    }.get(kind)
    if fn is None:
        raise ConfigError(f"unknown evaluate.kind {kind!r}")
    metrics = fn(ctx)
    bars = {k: v for k, v in metrics.items() if isinstance(v, float)}
    if bars:
        rpt.save_bars(ctx.out / "metrics.png", list(bars), list(bars.values()), "value", f"evaluate:{kind}")
    return {"kind": kind, **metrics}


def _eval_text(ctx: StageContext) -> dict:
    hyps = load_text_corpus(ctx.path("paths.hyp"))
    refs = load_text_corpus(ctx.path("paths.ref"))
    return _bleu_pair(hyps, refs)


def _limit(ctx, items):
    n = ctx.cfg["evaluate.limit"]
    return items[:n] if n else items


def _eval_asr(ctx: StageContext) -> dict:
    c = ctx.cfg
    world = _world(ctx)
    lang, split = c["uasr.language"], c["evaluate.split"]
    asr = load_asr(ctx.path("paths.asr"))
    manifest = _speech(world, ctx, lang, split)
    feats = _limit(ctx, manifest.load_all())
    refs = _limit(ctx, _gold_phoneme_refs(world, ctx, lang, split, manifest))
    hyps = [asr.decode_phoneme_ids(f) for f in feats]
    per = corpus_edit_rate(hyps, refs)
    transcribe = _transcriber(ctx, world, asr, lang)
    ctx.record(world.root / "gold" / f"transcripts_{lang}_{split}.tsv")
    gold_tr = world.gold_transcripts(lang, split)
    norm_refs = _limit(ctx, [gold_tr[rec.id][1].split() for rec in manifest])
    word_hyps = [transcribe(f).split() for f in feats]
    wer = corpus_edit_rate(word_hyps, norm_refs)
    per_utt = [edit_rate(h, r) for h, r in zip(hyps, refs) if r]
    rpt.save_curves(ctx.out / "per_by_utt.png", {"per": sorted(per_utt)}, "sorted per-utterance PER", xlabel="utt")
    return {"per": per, "wer": wer, "utterances": len(feats)}


def _eval_generator(ctx: StageContext) -> dict:
    c = ctx.cfg
    world = _world(ctx)
    lang, split = c["uasr.language"], c["evaluate.split"]
    encoder = load_encoder(ctx.path("paths.encoder"))
    gen, cmap, _ = load_generator(ctx.path("paths.generator"))
    manifest = _speech(world, ctx, lang, split)
    feats = _limit(ctx, extract_corpus(encoder, manifest.load_all(), c["adapt.extract_layer"]))
    refs = _limit(ctx, _gold_phoneme_refs(world, ctx, lang, split, manifest))
    hyps = [decode_phonemes(gen, f, cmap) for f in feats]
    return {"per": corpus_edit_rate(hyps, refs), "utterances": len(feats)}


def _eval_mt(ctx: StageContext) -> dict:
    c = ctx.cfg
    world = _world(ctx)
    mt, vocab = load_seq2seq(ctx.path("paths.mt"))
    ctx.record(world.root / "gold" / "bitext_text.tsv")
    rows = _limit(ctx, world.gold_text_bitext())
    hyps = [translate(mt, vocab, src_raw, "src", "tgt", beam=c["umt.beam"], nbest=1)[0][0]
            for src_raw, _, _, _ in rows]
    refs = [r[1] for r in rows]
    out = _bleu_pair(hyps, refs)
    out["token_accuracy"] = token_accuracy([h.split() for h in hyps], [r.split() for r in refs])
    out["sentences"] = len(rows)
    return out


def _cascade_hyps(ctx: StageContext, world: ToyWorld, feats, use_tdn: bool) -> list[str]:
    c = ctx.cfg
    asr = load_asr(ctx.path("paths.asr"))
    mt, mt_vocab = load_seq2seq(ctx.path("paths.mt"))
    transcribe = _transcriber(ctx, world, asr, "src")
    tdn_model = load_tdn(ctx.path("paths.tdn")) if use_tdn else None
    hyps = []
    for f in feats:
        norm = transcribe(f)
        text = denormalize(tdn_model, norm) if tdn_model else norm
        if not text.strip():
            hyps.append("")
            continue
        res = translate(mt, mt_vocab, text, "src", "tgt", beam=c["umt.beam"], nbest=1)
        hyps.append(res[0][0] if res else "")
    return hyps


def _speech_refs(ctx, world, split, manifest):
    ctx.record(world.root / "gold" / f"bitext_speech_{split}.tsv")
    bitext = world.gold_speech_bitext(split)
    return [bitext[rec.id][0] for rec in manifest]


def _eval_cascade_s2tt(ctx: StageContext) -> dict:
    c = ctx.cfg
    world = _world(ctx)
    split = c["evaluate.split"]
    manifest = _speech(world, ctx, "src", split)
    feats = _limit(ctx, manifest.load_all())
    refs = _limit(ctx, _speech_refs(ctx, world, split, manifest))
    hyps = _cascade_hyps(ctx, world, feats, use_tdn=c["evaluate.use_tdn"])
    out = _bleu_pair(hyps, refs)
    out["utterances"] = len(feats)
    out["tdn"] = int(c["evaluate.use_tdn"])
    return out


def _eval_cascade_s2st(ctx: StageContext) -> dict:
    c = ctx.cfg
    world = _world(ctx)
    split = c["evaluate.split"]
    manifest = _speech(world, ctx, "src", split)
    feats = _limit(ctx, manifest.load_all())
    refs = _limit(ctx, _speech_refs(ctx, world, split, manifest))
    text_hyps = _cascade_hyps(ctx, world, feats, use_tdn=c["evaluate.use_tdn"])
    tts_model = load_tts(ctx.path("paths.tts"))
    oracle = _oracle_asr(ctx, world, c["evaluate.tts_language"])
    lex = world.language(c["evaluate.tts_language"])
    syn_cfg = SynthesisConfig(max_frames=c["tts.max_frames"], stop_threshold=c["tts.stop_threshold"])
    speech_hyps = []
    for text in text_hyps:
        norm = normalize_text(text)
        try:
            phonemes = strip_silence(phonemize(norm, lex.lexicon, lex.phoneme_vocab))
        except Exception:
            speech_hyps.append("")
            continue
        if not phonemes:
            speech_hyps.append("")
            continue
        frames = synthesize(tts_model, phonemes, syn_cfg).frames
        speech_hyps.append(oracle.transcribe(frames))
    norm_refs = [normalize_text(r).split() for r in refs]
    hyp_tok = [h.split() for h in speech_hyps]
    return {
        "bleu_speech_norm": corpus_bleu(hyp_tok, norm_refs),
        "wer_speech_norm": corpus_edit_rate(hyp_tok, norm_refs),
        "bleu_text_raw": corpus_bleu([h.split() for h in text_hyps], [r.split() for r in refs]),
        "utterances": len(feats),
    }


def _eval_student_s2tt(ctx: StageContext) -> dict:
    c = ctx.cfg
    world = _world(ctx)
    split = c["evaluate.split"]
    model, vocab = load_student(ctx.path("paths.student"))
    manifest = _speech(world, ctx, "src", split)
    feats = _limit(ctx, manifest.load_all())
    refs = _limit(ctx, _speech_refs(ctx, world, split, manifest))
    start = vocab.id(lang_tag("tgt"))
    hyps = []
    from .umt.model import decode_ids

    for f in feats:
        ids = model.translate_speech(torch.from_numpy(f.astype(np.float32)), start, max_len=c["student.max_text_len"])
        hyps.append(decode_ids(ids, vocab))
    out = _bleu_pair(hyps, refs)
    out["utterances"] = len(feats)
    return out


def _eval_student_s2st(ctx: StageContext) -> dict:
    c = ctx.cfg
    world = _world(ctx)
    split = c["evaluate.split"]
    model, vocab = load_student(ctx.path("paths.student"))
    manifest = _speech(world, ctx, "src", split)
    feats = _limit(ctx, manifest.load_all())
    refs = _limit(ctx, _speech_refs(ctx, world, split, manifest))
    oracle = _oracle_asr(ctx, world, c["evaluate.tts_language"])
    start = vocab.id(lang_tag("tgt"))
    speech_hyps, text_hyps = [], []
    from .umt.model import decode_ids

    for f in feats:
        ids, frames = model.synthesize_speech(
            torch.from_numpy(f.astype(np.float32)), start,
            max_text_len=c["student.max_text_len"], max_frames=c["tts.max_frames"],
            stop_threshold=c["tts.stop_threshold"],
        )
        text_hyps.append(decode_ids(ids, vocab))
        speech_hyps.append(oracle.transcribe(frames))
    norm_refs = [normalize_text(r).split() for r in refs]
    hyp_tok = [h.split() for h in speech_hyps]
    return {
        "bleu_speech_norm": corpus_bleu(hyp_tok, norm_refs),
        "wer_speech_norm": corpus_edit_rate(hyp_tok, norm_refs),
        "bleu_text_raw": corpus_bleu([h.split() for h in text_hyps], [r.split() for r in refs]),
        "utterances": len(feats),
    }


def _eval_tts_resynthesis(ctx: StageContext) -> dict:
    c = ctx.cfg
    world = _world(ctx)
    lang = c["evaluate.tts_language"]
    tts_model = load_tts(ctx.path("paths.tts"))
    text_path = ctx.path("paths.text_a", required=False)
    if text_path:
        lines = load_text_corpus(text_path)
    else:
        ctx.record(world.root / "gold" / f"transcripts_{lang}_valid.tsv")
        lines = [raw for raw, _ in world.gold_transcripts(lang, "valid").values()]
    lines = _limit(ctx, lines)
    lex = world.language(lang)
    oracle = _oracle_asr(ctx, world, lang)
    syn_cfg = SynthesisConfig(max_frames=c["tts.max_frames"], stop_threshold=c["tts.stop_threshold"])
    ph_hyps, ph_refs, word_hyps, word_refs, lengths = [], [], [], [], []
    for line in lines:
        norm = normalize_text(line)
        phonemes = strip_silence(phonemize(norm, lex.lexicon, lex.phoneme_vocab))
        if not phonemes:
            continue
        result = synthesize(tts_model, phonemes, syn_cfg)
        ph_hyps.append(oracle.phoneme_ids_of(result.frames))
        ph_refs.append(phonemes)
        word_hyps.append(oracle.transcribe(result.frames).split())
        word_refs.append(norm.split())
        lengths.append(result.frames.shape[0] / max(1, len(phonemes)))
    return {
        "per": corpus_edit_rate(ph_hyps, ph_refs),
        "wer": corpus_edit_rate(word_hyps, word_refs),
        "frames_per_phoneme": float(np.mean(lengths)) if lengths else float("nan"),
        "sentences": len(ph_refs),
    }


def stage_jsd(ctx: StageContext) -> dict:
    c = ctx.cfg
    world = _world(ctx)
    lang = c["jsd.language"]
    lex = world.language(lang)
    order = c["jsd.order"]

    def phoneme_corpus(path: Path) -> list[list[str]]:
        out = []
        for line in load_text_corpus(path):
            ids = strip_silence(phonemize(normalize_text(line), lex.lexicon, lex.phoneme_vocab))
            out.append([lex.phoneme_vocab.symbol(i) for i in ids])
        return out

    a = phoneme_corpus(ctx.path("paths.text_a"))
    b = phoneme_corpus(ctx.path("paths.text_b"))
    value = jsd_4gram(a, b, order=order)
    return {"jsd": value, "order": order, "sentences_a": len(a), "sentences_b": len(b)}


STAGE_FNS = {
    "gen-world": stage_gen_world,
    "adapt": stage_adapt,
    "train-uasr": stage_train_uasr,
    "self-train": stage_self_train,
    "train-umt": stage_train_umt,
    "train-tdn": stage_train_tdn,
    "train-tts": stage_train_tts,
    "pseudo-label": stage_pseudo_label,
    "train-student-s2tt": stage_train_student_s2tt,
    "train-student-s2st": stage_train_student_s2st,
    "evaluate": stage_evaluate,
    "jsd": stage_jsd,
}
