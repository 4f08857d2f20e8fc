"""Versioned binary checkpoint format.

Layout (bit-exact round trip required):

    line 1  b"ibol-lab-checkpoint v1\\n"
    line 2  module name + b"\\n"
    line 3  JSON header + b"\\n"   {"entries": [{"name", "shape"}...], "extra": {...}}
    body    named arrays concatenated in header order, little-endian float64
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .autodiff import ParamVector

MAGIC = b"ibol-lab-checkpoint v1"


def save_checkpoint(path: str | Path, module: str, params: ParamVector,
                    extra: dict | None = None) -> None:
    entries = [{"name": name, "shape": list(t.data.shape)} for name, t in params]
    header = json.dumps({"entries": entries, "extra": extra or {}},
                        sort_keys=True, separators=(",", ":"))
    with open(path, "wb") as fh:
        fh.write(MAGIC + b"\n")
        fh.write(module.encode("utf-8") + b"\n")
        fh.write(header.encode("utf-8") + b"\n")
        for _, t in params:
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[str, dict[str, np.ndarray], dict]:
    """Returns (module name, name -> array, extra)."""
    with open(path, "rb") as fh:
        magic = fh.readline().rstrip(b"\n")
        if magic != MAGIC:
            raise ValueError(f"not an ibol-lab checkpoint: {path}")
        module = fh.readline().rstrip(b"\n").decode("utf-8")
        header = json.loads(fh.readline().rstrip(b"\n").decode("utf-8"))
        arrays: dict[str, np.ndarray] = {}
        for entry in header["entries"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise ValueError(f"truncated checkpoint: {path}")
            arrays[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
        if fh.read(1):
            raise ValueError(f"trailing bytes in checkpoint: {path}")
    return module, arrays, header.get("extra", {})
