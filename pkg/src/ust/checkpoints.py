"""Named-parameter checkpoints: binary container, selection, averaging.

File layout: magic "USTCKPT1", u32 LE manifest length, JSON manifest
{"meta": {...}, "tensors": [{"name", "shape"}...]}, then the tensors'
f32 LE payloads concatenated in manifest order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IoError, MalformedError, SchemaMismatchError

_MAGIC = b"USTCKPT1"


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    step: int = 0
    valid_loss: float = float("nan")
    metric: float = float("nan")
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def schema(self) -> tuple[tuple[str, tuple[int, ...]], ...]:
        return tuple(sorted((k, tuple(v.shape)) for k, v in self.params.items()))


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    names = sorted(ckpt.params)
    manifest = {
        "meta": {
            "step": ckpt.step,
            "valid_loss": None if np.isnan(ckpt.valid_loss) else ckpt.valid_loss,
            "metric": None if np.isnan(ckpt.metric) else ckpt.metric,
            "seed": ckpt.seed,
            "extra": ckpt.extra,
        },
        "tensors": [{"name": n, "shape": list(ckpt.params[n].shape)} for n in names],
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for n in names:
            f.write(np.ascontiguousarray(ckpt.params[n], dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise IoError(f"checkpoint missing: {path}")
    raw = path.read_bytes()
    if raw[: len(_MAGIC)] != _MAGIC:
        raise MalformedError(f"bad checkpoint magic in {path}")
    (blob_len,) = struct.unpack_from("<I", raw, len(_MAGIC))
    start = len(_MAGIC) + 4
    manifest = json.loads(raw[start : start + blob_len].decode("utf-8"))
    offset = start + blob_len
    params: dict[str, np.ndarray] = {}
    for spec in manifest["tensors"]:
        shape = tuple(spec["shape"])
        n_el = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f4", count=n_el, offset=offset).reshape(shape)
        params[spec["name"]] = arr.copy()
        offset += 4 * n_el
    if offset != len(raw):
        raise MalformedError(f"checkpoint {path}: trailing bytes")
    meta = manifest["meta"]
    return Checkpoint(
        params=params,
        step=meta.get("step", 0),
        valid_loss=float("nan") if meta.get("valid_loss") is None else meta["valid_loss"],
        metric=float("nan") if meta.get("metric") is None else meta["metric"],
        seed=meta.get("seed", 0),
        extra=meta.get("extra", {}),
    )


def average_checkpoints(checkpoints: list[Checkpoint]) -> Checkpoint:
    """Uniform elementwise mean of all named parameters."""
    if not checkpoints:
        raise ValueError("no checkpoints to average")
    schema = checkpoints[0].schema()
    for c in checkpoints[1:]:
        if c.schema() != schema:
            raise SchemaMismatchError("checkpoints have different parameter schemas")
    params = {
        name: np.mean([c.params[name] for c in checkpoints], axis=0).astype(np.float32)
        for name in checkpoints[0].params
    }
    return Checkpoint(
        params=params,
        step=max(c.step for c in checkpoints),
        seed=checkpoints[0].seed,
        extra={"averaged_steps": [c.step for c in checkpoints]},
    )


def select_checkpoints(history: list[Checkpoint], rule: str, k: int) -> list[Checkpoint]:
    """Deterministic selection; metric/loss ties are broken by later step.

    rule: "best_k_by_metric", "last_k" or "best_k_by_valid_loss".
    """
    if not history:
        raise ValueError("empty checkpoint history")
    if rule == "last_k":
        return sorted(history, key=lambda c: c.step)[-k:]
    if rule == "best_k_by_metric":
        key = lambda c: (c.metric, -c.step)
    elif rule == "best_k_by_valid_loss":
        key = lambda c: (c.valid_loss, -c.step)
    else:
        raise ValueError(f"unknown selection rule {rule!r}")
    return sorted(history, key=key)[:k]


# -- torch interop ---------------------------------------------------------


def module_to_params(module) -> dict[str, np.ndarray]:
    out = {}
    for name, tensor in module.state_dict().items():
        if not tensor.dtype.is_floating_point:
            raise ValueError(f"non-float state entry {name!r} not supported")
        out[name] = tensor.detach().cpu().numpy().astype(np.float32).copy()
    return out


def params_into_module(module, params: dict[str, np.ndarray]) -> None:
    import torch

    state = {k: torch.from_numpy(np.asarray(v, dtype=np.float32)).clone() for k, v in params.items()}
    module.load_state_dict(state)
