"""Lloyd k-means with farthest-point seeding, frame labeling, run merging.

Cluster ids are 1-based (1..K); 0 is kept free for the CTC blank.
Codebook files: header (K: u32 LE, dim: u32 LE) + row-major f32 centroids.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimMismatchError, IoError, MalformedError, TooFewPointsError

_HEADER = struct.Struct("<II")


@dataclass
class Codebook:
    centroids: np.ndarray  # (K, dim) float32

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


def save_codebook(codebook: Codebook, path: str | Path) -> None:
    arr = np.ascontiguousarray(codebook.centroids, dtype="<f4")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(arr.shape[0], arr.shape[1]))
        f.write(arr.tobytes())


def load_codebook(path: str | Path) -> Codebook:
    path = Path(path)
    if not path.is_file():
        raise IoError(f"codebook missing: {path}")
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise MalformedError(f"codebook too short: {path}")
    k, d = _HEADER.unpack_from(raw)
    if len(raw) != _HEADER.size + 4 * k * d:
        raise MalformedError(f"codebook {path}: size mismatch")
    return Codebook(np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(k, d).copy())


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # (N, K) squared euclidean distances
    return (
        np.sum(points**2, axis=1, keepdims=True)
        - 2.0 * points @ centroids.T
        + np.sum(centroids**2, axis=1)
    )


def kmeans_objective(points: np.ndarray, centroids: np.ndarray) -> float:
    return float(np.min(_sq_dists(points, centroids), axis=1).sum())


def kmeans_fit(
    frames: np.ndarray,
    k: int,
    seed: int = 0,
    max_iter: int = 50,
    history: list[float] | None = None,
) -> Codebook:
    """Fit K centroids by Lloyd iterations.

    Seeding: the first centroid is chosen uniformly by the seeded RNG, the
    rest by farthest-point selection, so the result is deterministic per
    seed. The sum-of-squared-distances objective never increases across
    iterations (`history`, when given, collects it after each update).
    """
    points = np.asarray(frames, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError(f"frames must be 2-d, got shape {points.shape}")
    n = points.shape[0]
    if n < k:
        raise TooFewPointsError(f"{n} frames for {k} clusters")
    rng = np.random.default_rng(seed)

    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    centroids[0] = points[rng.integers(n)]
    min_d = np.sum((points - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        centroids[j] = points[int(np.argmax(min_d))]
        min_d = np.minimum(min_d, np.sum((points - centroids[j]) ** 2, axis=1))

    assign = np.full(n, -1)
    for _ in range(max_iter):
        new_assign = np.argmin(_sq_dists(points, centroids), axis=1)
        for j in range(k):
            sel = new_assign == j
            if sel.any():
                centroids[j] = points[sel].mean(axis=0)
            # empty cluster: keep the previous centroid
        if history is not None:
            history.append(kmeans_objective(points, centroids))
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    return Codebook(centroids.astype(np.float32))


@dataclass
class FrameLabelSequence:
    labels: list[int]  # cluster ids in 1..K
    merged: bool = False

    def __post_init__(self):
        if self.merged:
            for a, b in zip(self.labels, self.labels[1:]):
                if a == b:
                    raise ValueError("merged sequence has equal consecutive labels")

    def __len__(self) -> int:
        return len(self.labels)


def assign_labels(features: np.ndarray, codebook: Codebook) -> FrameLabelSequence:
    """Nearest-centroid label per frame, ties broken by lowest centroid index."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[1] != codebook.dim:
        raise DimMismatchError(
            f"features dim {feats.shape} vs codebook dim {codebook.dim}"
        )
    d = _sq_dists(feats, codebook.centroids.astype(np.float64))
    return FrameLabelSequence(labels=(np.argmin(d, axis=1) + 1).tolist(), merged=False)


def merge_consecutive(seq: FrameLabelSequence) -> FrameLabelSequence:
    """Collapse runs of identical labels to single labels."""
    merged: list[int] = []
    for lab in seq.labels:
        if not merged or merged[-1] != lab:
            merged.append(lab)
    return FrameLabelSequence(labels=merged, merged=True)


def merge_runs(values: list[int]) -> list[int]:
    """Run-collapse for plain id lists (shared by decoders)."""
    out: list[int] = []
    for v in values:
        if not out or out[-1] != v:
            out.append(v)
    return out
