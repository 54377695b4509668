"""Versioned JSON snapshots of model state."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

from .dglm import STATE_VERSION, BernoulliDGLM, NormalDLM, PoissonDGLM
from .errors import InputError
from .mixtures import DCMM, DLMM

MODEL_CLASSES = {cls.family: cls for cls in (PoissonDGLM, BernoulliDGLM, NormalDLM, DCMM, DLMM)}


def dump_model(model) -> dict:
    return model.to_dict()


def load_model(record: dict):
    try:
        cls = MODEL_CLASSES[record["family"]]
    except (KeyError, TypeError):
        raise InputError(f"unknown model family in state record: {record!r:.80}") from None
    if record.get("version") != STATE_VERSION:
        raise InputError(f"unsupported model state version {record.get('version')}")
    try:
        return cls.from_dict(record)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"corrupt {record['family']} state record: {exc}") from None


def atomic_write_json(path: str | Path, payload: dict) -> None:
    """Write via a temp file in the same directory and rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
