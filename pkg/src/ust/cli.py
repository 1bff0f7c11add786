"""Config-driven experiment runner.

Usage:
    ust run CONFIG [CONFIG...] [--set key=value]...
    ust describe [CONFIG...] [--set key=value]...

Exit codes: 0 success, 2 config error, 3 stage error. Paths resolve
against the workspace root (config `workspace`, else $UST_WORKSPACE,
else the current directory); a stage only writes inside its output_dir.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from .config import STAGES, WORKSPACE_ENV, RunConfig, load_config
from .errors import ConfigError, StageError, UstError
from .report import write_report
from .stages import STAGE_FNS, StageContext


@dataclass
class RunReport:
    stage: str
    wall_time: float
    metrics: dict
    config_hash: str
    output_dir: Path


def _workspace(cfg: RunConfig) -> Path:
    raw = str(cfg["workspace"]) or os.environ.get(WORKSPACE_ENV, "") or "."
    return Path(raw).resolve()


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _file_entries(paths: list[Path], base: Path) -> list[dict]:
    entries = []
    for p in sorted(set(paths)):
        entry: dict = {"path": str(p.relative_to(base)) if p.is_relative_to(base) else str(p)}
        if p.is_file():
            entry["sha256"] = _sha256(p)
        elif p.is_dir():
            entry["dir"] = True
        entries.append(entry)
    return entries


def preflight(cfg: RunConfig) -> Path:
    if cfg.stage not in STAGES:
        raise ConfigError(
            f"unknown or missing stage {cfg.stage!r}; expected one of {', '.join(STAGES)}"
        )
    if not str(cfg["output_dir"]):
        raise ConfigError("output_dir is required")
    return _workspace(cfg)


def run(cfg: RunConfig) -> RunReport:
    """Execute exactly one stage; write checkpoints, reports, provenance."""
    import torch

    workspace = preflight(cfg)
    out = (workspace / str(cfg["output_dir"])).resolve()
    out.mkdir(parents=True, exist_ok=True)
    torch.set_num_threads(1)  # determinism contract: single-threaded mode
    ctx = StageContext(cfg=cfg, workspace=workspace, out=out)
    t0 = time.perf_counter()
    try:
        metrics = STAGE_FNS[cfg.stage](ctx)
    except (ConfigError, StageError):
        raise
    except Exception as exc:
        raise StageError(f"stage {cfg.stage!r} failed: {exc}") from exc
    wall = time.perf_counter() - t0

    config_hash = cfg.hash()
    write_report(out, {"stage": cfg.stage, "config_hash": config_hash, **metrics})
    outputs = [p for p in out.rglob("*") if p.is_file() and p.name != "MANIFEST.json"]
    manifest = {
        "stage": cfg.stage,
        "seed": cfg["seed"],
        "config_hash": config_hash,
        "config": {k: cfg.values[k] for k in sorted(cfg.values)},
        "wall_time_sec": round(wall, 3),
        "inputs": _file_entries(ctx.inputs, workspace),
        "outputs": _file_entries(outputs, workspace),
    }
    (out / "MANIFEST.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1, default=str) + "\n", encoding="utf-8"
    )
    return RunReport(cfg.stage, wall, metrics, config_hash, out)


def describe(cfg: RunConfig) -> str:
    """Resolved config dump (every default made explicit), no execution."""
    return cfg.describe()


def _parse_args(argv):
    parser = argparse.ArgumentParser(prog="ust", description="unsupervised speech translation, desk scale")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "execute one pipeline stage"), ("describe", "print the resolved config")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("configs", nargs="*", help="config files (flat key = value, with `include`)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    return parser.parse_args(argv)


def _overrides(pairs: list[str]) -> dict[str, str]:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key.strip()] = value
    return out


def main(argv=None) -> int:
    args = _parse_args(argv if argv is not None else sys.argv[1:])
    try:
        cfg = load_config(args.configs, _overrides(args.overrides))
        if args.command == "describe":
            sys.stdout.write(describe(cfg))
            return 0
        report = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (StageError, UstError) as exc:
        print(f"stage error: {exc}", file=sys.stderr)
        return 3
    summary = " ".join(f"{k}={v}" for k, v in sorted(report.metrics.items()))
    print(f"[{report.stage}] {report.wall_time:.1f}s {summary}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
