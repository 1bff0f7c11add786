"""Runtime guard keeping gold (evaluation-only) data out of training stages.

Training entry points run inside `training_guard(stage)`. Every accessor
of gold artifacts calls `assert_gold_allowed` first, so a training code
path that tries to reach gold transcripts, bitext, phonemes or prototype
tables fails loudly instead of silently cheating.
"""

from __future__ import annotations

from contextlib import contextmanager

from .errors import GoldDataError

_ACTIVE: list[str] = []


@contextmanager
def training_guard(stage: str):
    _ACTIVE.append(stage)
    try:
        yield
    finally:
        _ACTIVE.pop()


def guard_active() -> bool:
    return bool(_ACTIVE)


def assert_gold_allowed(what: str) -> None:
    if _ACTIVE:
        raise GoldDataError(
            f"gold data ({what}) requested inside training stage {_ACTIVE[-1]!r}"
        )
