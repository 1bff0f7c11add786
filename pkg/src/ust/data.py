"""Corpus data model and file formats.

Feature files: header (frames: u32 LE, dim: u32 LE) + row-major f32 LE.
Manifests: one record per line, tab separated
(id, feature path relative to the manifest, raw text, normalized text);
empty text fields mean absent.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import IoError, MalformedError

_HEADER = struct.Struct("<II")


def save_features(path: str | Path, frames: np.ndarray) -> None:
    arr = np.ascontiguousarray(frames, dtype="<f4")
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise ValueError(f"features must be (frames >= 1, dim), got {arr.shape}")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(arr.shape[0], arr.shape[1]))
        f.write(arr.tobytes())


def load_features(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise IoError(f"feature file missing: {path}")
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise MalformedError(f"feature file too short: {path}")
    n, d = _HEADER.unpack_from(raw)
    expected = _HEADER.size + 4 * n * d
    if len(raw) != expected:
        raise MalformedError(f"feature file {path}: expected {expected} bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(n, d).copy()


@dataclass
class Utterance:
    id: str
    feature_path: str
    raw_text: str | None = None
    norm_text: str | None = None
    gold_phonemes: list[int] | None = None  # evaluation only, never set by loaders
    _features: np.ndarray | None = field(default=None, repr=False, compare=False)

    def features(self, root: Path) -> np.ndarray:
        if self._features is None:
            self._features = load_features(root / self.feature_path)
        return self._features


@dataclass
class CorpusManifest:
    records: list[Utterance]
    split: str = "train"
    language: str = "src"
    root: Path = Path(".")  # directory feature paths are relative to

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def features(self, record: Utterance) -> np.ndarray:
        return record.features(self.root)

    def load_all(self) -> list[np.ndarray]:
        return [self.features(r) for r in self.records]

    def subset(self, indices: list[int], split: str | None = None) -> "CorpusManifest":
        return CorpusManifest(
            records=[replace(self.records[i]) for i in indices],
            split=split or self.split,
            language=self.language,
            root=self.root,
        )


def save_manifest(manifest: CorpusManifest, path: str | Path) -> None:
    path = Path(path)
    lines = []
    for rec in manifest.records:
        for piece in (rec.raw_text, rec.norm_text):
            if piece and ("\t" in piece or "\n" in piece):
                raise ValueError(f"text field of {rec.id} contains tab/newline")
        lines.append(
            "\t".join(
                [rec.id, rec.feature_path, rec.raw_text or "", rec.norm_text or ""]
            )
        )
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def load_manifest(
    path: str | Path,
    split: str = "train",
    language: str = "src",
    check_features: bool = True,
) -> CorpusManifest:
    path = Path(path)
    if not path.is_file():
        raise IoError(f"manifest missing: {path}")
    root = path.parent
    records: list[Utterance] = []
    seen: set[str] = set()
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line:
            continue
        cols = line.split("\t")
        if len(cols) != 4:
            raise MalformedError(f"expected 4 columns, got {len(cols)}", line_no)
        utt_id, feat_path, raw, norm = cols
        if not utt_id:
            raise MalformedError("empty utterance id", line_no)
        if utt_id in seen:
            raise MalformedError(f"duplicate utterance id {utt_id!r}", line_no)
        seen.add(utt_id)
        if check_features and not (root / feat_path).is_file():
            raise MalformedError(f"missing feature file for record {utt_id!r}", line_no)
        records.append(
            Utterance(
                id=utt_id,
                feature_path=feat_path,
                raw_text=raw or None,
                norm_text=norm or None,
            )
        )
    return CorpusManifest(records=records, split=split, language=language, root=root)


def save_text_corpus(lines: list[str], path: str | Path) -> None:
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def load_text_corpus(path: str | Path) -> list[str]:
    path = Path(path)
    if not path.is_file():
        raise IoError(f"text corpus missing: {path}")
    return [line for line in path.read_text(encoding="utf-8").splitlines() if line]
