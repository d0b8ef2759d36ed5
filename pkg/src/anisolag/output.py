"""Deterministic JSON/CSV output and run manifests."""
from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass
from importlib import metadata
from pathlib import Path

import numpy as np

from .errors import InputError


def tool_version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        from . import __version__

        return __version__


@dataclass(frozen=True)
class RunManifest:
    command: str
    config_path: str | None
    seed: int
    output_dir: str | None
    tool_version: str

    def to_json(self):
        return asdict(self)


def plain(obj):
    """Recursively turn numpy values into JSON-ready Python values.

    Non-finite floats become the strings ``"inf"``, ``"-inf"`` and ``"nan"``.
    """
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def dumps(obj):
    """Canonical JSON text: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(plain(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_atomic(path, text):
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path, obj):
    return write_atomic(path, dumps(obj))


def load_json_arg(text):
    """JSON from a file path, or inline JSON text."""
    p = Path(text)
    try:
        if p.is_file():
            return json.loads(p.read_text(encoding="utf-8"))
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON in {text!r}: {exc}") from None
