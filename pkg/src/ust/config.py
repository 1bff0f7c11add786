"""Flat key=value experiment configuration with includes and defaults.

Files hold `key = value` lines, `#` comments, and `include <relpath>`
lines (resolved against the including file). Unknown keys are rejected
by name. Every hyperparameter has a default; the config hash covers the
fully resolved mapping.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

from .errors import ConfigError

STAGES = (
    "gen-world", "adapt", "train-uasr", "self-train", "train-umt", "train-tdn",
    "train-tts", "pseudo-label", "train-student-s2tt", "train-student-s2st",
    "evaluate", "jsd",
)

WORKSPACE_ENV = "UST_WORKSPACE"


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (default, type constructor)
DEFAULTS: dict[str, tuple] = {
    "stage": ("", str),
    "seed": (0, int),
    "output_dir": ("", str),
    "workspace": ("", str),
    # toy world
    "world.phoneme_inventory": (12, int),
    "world.lexicon_size": (50, int),
    "world.frames_per_phoneme_min": (2, int),
    "world.frames_per_phoneme_max": (4, int),
    "world.noise_std": (0.1, float),
    "world.prototype_dim": (16, int),
    "world.word_order_rule": ("reverse", str),
    "world.word_classes": (4, int),
    "world.word_len_min": (2, int),
    "world.word_len_max": (5, int),
    "world.sentence_len_min": (3, int),
    "world.sentence_len_max": (8, int),
    "world.zipf_exponent": (0.8, float),
    "world.comma_min_len": (5, int),
    "world.n_speech_train": (300, int),
    "world.n_speech_valid": (40, int),
    "world.n_speech_test": (40, int),
    "world.n_tgt_speech_train": (250, int),
    "world.n_tgt_speech_valid": (30, int),
    "world.n_text": (500, int),
    "world.n_mt_test": (120, int),
    "world.prototype_rotation": (0.0, float),
    "world.prototype_scale": (1.0, float),
    "world.prototype_bias": (0.0, float),
    # recorded for documentation parity with log-Mel pipelines; unused math
    "audio.sample_rate": (22050, int),
    "audio.fft_size": (1024, int),
    "audio.window_length": (1024, int),
    "audio.hop_length": (1024 // 4, int),
    # artifact inputs
    "paths.world": ("", str),
    "paths.encoder": ("", str),
    "paths.generator": ("", str),
    "paths.asr": ("", str),
    "paths.mt": ("", str),
    "paths.tdn": ("", str),
    "paths.tts": ("", str),
    "paths.pairs": ("", str),
    "paths.pairs_valid": ("", str),
    "paths.student": ("", str),
    "paths.hyp": ("", str),
    "paths.ref": ("", str),
    "paths.text_a": ("", str),
    "paths.text_b": ("", str),
    # encoder surrogate
    "encoder.layers": (3, int),
    "encoder.kernel": (3, int),
    # unsupervised adaptation
    "adapt.language": ("src", str),
    "adapt.split": ("train", str),
    "adapt.kmeans_clusters": (128, int),
    "adapt.kmeans_iters": (30, int),
    "adapt.extract_layer": (2, int),
    "adapt.steps": (600, int),
    "adapt.batch_size": (8, int),
    "adapt.lr": (1e-3, float),
    "adapt.freeze_steps": (0, int),
    "adapt.holdout": (8, int),
    # adversarial phoneme recognizer
    "uasr.language": ("src", str),
    "uasr.sigma_noise": (0.1, float),
    "uasr.alpha_rdrop": (1.0, float),
    "uasr.lambda_gp": (1.0, float),
    "uasr.gamma_sp": (1.5, float),
    "uasr.delta_pd": (0.3, float),
    "uasr.eta_aux": (3.0, float),
    "uasr.input_dropout": (0.2, float),
    "uasr.hidden_dropout": (0.1, float),
    "uasr.hidden": (64, int),
    "uasr.aux_clusters": (16, int),
    "uasr.steps": (3000, int),
    "uasr.batch_size": (8, int),
    "uasr.lr_g": (4e-4, float),
    "uasr.lr_d": (4e-4, float),
    "uasr.ckpt_interval": (250, int),
    # CTC self-training
    "selftrain.steps": (1200, int),
    "selftrain.batch_size": (8, int),
    "selftrain.lr": (1e-3, float),
    "selftrain.holdout": (8, int),
    # word decoding
    "decode.beam": (8, int),
    "decode.lm_weight": (1.0, float),
    "decode.word_score": (-0.5, float),
    "decode.word_lm_order": (3, int),
    "decode.phoneme_lm_order": (4, int),
    # unsupervised MT
    "umt.d_model": (96, int),
    "umt.nhead": (4, int),
    "umt.layers": (2, int),
    "umt.ffn": (192, int),
    "umt.dropout": (0.1, float),
    "umt.batch_size": (16, int),
    "umt.lr": (7e-4, float),
    "umt.dae_steps": (2000, int),
    "umt.obt_steps": (2000, int),
    "umt.span_mask_prob": (0.35, float),
    "umt.span_length_lambda": (3.5, float),
    "umt.sentence_permute": (True, _bool),
    "umt.vocab_mask_frac": (0.99, float),
    "umt.vocab_mask_steps": (500, int),
    "umt.ckpt_interval": (200, int),
    "umt.average_last": (5, int),
    "umt.bt_max_len": (24, int),
    "umt.beam": (4, int),
    "umt.nbest": (2, int),
    "umt.holdout": (16, int),
    # text de-normalization
    "tdn.language": ("src", str),
    "tdn.d_model": (96, int),
    "tdn.nhead": (4, int),
    "tdn.layers": (2, int),
    "tdn.ffn": (192, int),
    "tdn.dropout": (0.1, float),
    "tdn.batch_size": (16, int),
    "tdn.lr": (7e-4, float),
    "tdn.steps": (1200, int),
    "tdn.holdout": (16, int),
    # speech synthesis
    "tts.language": ("tgt", str),
    "tts.d_model": (96, int),
    "tts.nhead": (4, int),
    "tts.layers": (2, int),
    "tts.ffn": (192, int),
    "tts.dropout": (0.1, float),
    "tts.prenet_dropout": (0.3, float),
    "tts.alpha_consistency": (1.0, float),
    "tts.stop_pos_weight": (5.0, float),
    "tts.stop_threshold": (0.5, float),
    "tts.max_frames": (400, int),
    "tts.steps": (1500, int),
    "tts.batch_size": (8, int),
    "tts.lr": (7e-4, float),
    "tts.ckpt_interval": (150, int),
    "tts.average_last": (5, int),
    "tts.holdout": (8, int),
    # pseudo-labeling
    "pseudo.kind": ("s2tt", str),
    "pseudo.nbest": (2, int),
    "pseudo.splits": ("train,valid", str),
    "pseudo.limit": (0, int),
    # students
    "student.d_model": (96, int),
    "student.nhead": (4, int),
    "student.layers": (2, int),
    "student.ffn": (192, int),
    "student.dropout": (0.1, float),
    "student.bridge_layers": (1, int),
    "student.prenet_dropout": (0.2, float),
    "student.stop_pos_weight": (5.0, float),
    "student.steps": (1500, int),
    "student.batch_size": (8, int),
    "student.lr": (5e-4, float),
    "student.ckpt_interval": (150, int),
    "student.average_best": (5, int),
    "student.max_text_len": (24, int),
    "student.random_init": (False, _bool),
    # evaluation
    "evaluate.kind": ("text", str),
    "evaluate.split": ("test", str),
    "evaluate.limit": (0, int),
    "evaluate.use_tdn": (True, _bool),
    "evaluate.tts_language": ("tgt", str),
    # jsd stage
    "jsd.order": (4, int),
    "jsd.language": ("tgt", str),
}


class RunConfig:
    """Resolved configuration: defaults overlaid by files and overrides."""

    def __init__(self, values: dict[str, object]):
        self.values = values

    def __getitem__(self, key: str):
        try:
            return self.values[key]
        except KeyError:
            raise ConfigError(f"unknown config key: {key!r}") from None

    @property
    def stage(self) -> str:
        return str(self.values["stage"])

    def hash(self) -> str:
        text = "".join(f"{k}={self.values[k]}\n" for k in sorted(self.values))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]

    def describe(self) -> str:
        return "".join(f"{k} = {self.values[k]}\n" for k in sorted(self.values))


def _parse_value(key: str, raw: str):
    if key not in DEFAULTS:
        raise ConfigError(f"unknown config key: {key!r}")
    _, ctor = DEFAULTS[key]
    try:
        return ctor(raw.strip()) if ctor is not str else raw.strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}") from exc


def _read_file(path: Path, out: dict[str, object], depth: int = 0) -> None:
    if depth > 8:
        raise ConfigError(f"include depth exceeded at {path}")
    if not path.is_file():
        raise ConfigError(f"config file missing: {path}")
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if text.startswith("include "):
            _read_file((path.parent / text[len("include "):].strip()).resolve(), out, depth + 1)
            continue
        if "=" not in text:
            raise ConfigError(f"{path}:{line_no}: expected key = value, got {line!r}")
        key, raw = text.split("=", 1)
        out[key.strip()] = _parse_value(key.strip(), raw)


def load_config(
    files: list[str | Path] | None = None, overrides: dict[str, str] | None = None
) -> RunConfig:
    values = {k: v for k, (v, _) in DEFAULTS.items()}
    for f in files or []:
        file_values: dict[str, object] = {}
        _read_file(Path(f).resolve(), file_values)
        values.update(file_values)
    for key, raw in (overrides or {}).items():
        values[key] = _parse_value(key, raw) if isinstance(raw, str) else _checked(key, raw)
    return RunConfig(values)


def _checked(key: str, value):
    if key not in DEFAULTS:
        raise ConfigError(f"unknown config key: {key!r}")
    return value


def make_config(**overrides) -> RunConfig:
    """Programmatic config: keyword keys use '_' for '.' only when exact
    keys are passed via dict; prefer config_from_dict for dotted keys."""
    return config_from_dict(overrides)


def config_from_dict(overrides: dict[str, object]) -> RunConfig:
    values = {k: v for k, (v, _) in DEFAULTS.items()}
    for key, value in overrides.items():
        values[key] = _checked(key, value)
    return RunConfig(values)
