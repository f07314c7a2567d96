"""Artifact writing: atomic file replacement plus metadata sidecars.

Artifacts themselves carry no timestamps, so identical runs produce
byte-identical files; provenance (resolved parameters, version, wall
time) lives in a ``<name>.meta.json`` sidecar next to each artifact.
"""

from __future__ import annotations

import json
import os
import tempfile
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import __version__
from .chains import GateKind


def json_ready(obj: Any) -> Any:
    """Recursively convert package values into JSON-encodable ones.

    Fractions become "p/q" strings so exactness survives the trip.
    """
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if isinstance(obj, GateKind):
        return obj.value
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [json_ready(x) for x in obj.tolist()]
    if isinstance(obj, Mapping):
        return {str(k): json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_ready(x) for x in obj]
    return obj


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a temp file in the target directory, then rename."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(
        dir=target.parent, prefix=f".{target.name}.", suffix=".tmp"
    )
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, target)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def sidecar_path(path: str | Path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".meta.json")


def build_meta(command: str, parameters: Mapping[str, Any]) -> dict[str, Any]:
    return {
        "command": command,
        "parameters": json_ready(dict(parameters)),
        "version": __version__,
        "created": datetime.now(timezone.utc).isoformat(),
    }


def write_artifact(
    path: str | Path, text: str, meta: Mapping[str, Any] | None = None
) -> None:
    """Atomically write an artifact and, if given, its sidecar."""
    atomic_write_text(path, text)
    if meta is not None:
        atomic_write_text(
            sidecar_path(path), json.dumps(json_ready(meta), indent=2) + "\n"
        )
