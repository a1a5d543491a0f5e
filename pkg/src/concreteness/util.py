"""Small shared helpers: atomic file output, seed derivation, float formatting."""

from __future__ import annotations

import json
import os
import tempfile
import zlib
from pathlib import Path

import numpy as np


def atomic_write_bytes(path: str | os.PathLike, payload: bytes) -> None:
    """Write a file atomically (temp file in the same directory + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path: str | os.PathLike, obj) -> None:
    """Canonical JSON output: sorted keys, stable float repr, trailing newline."""
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def fmt(x) -> str:
    """Shortest round-trip decimal form; empty string for missing values."""
    if x is None:
        return ""
    if isinstance(x, (np.floating, np.integer)):
        x = x.item()
    return repr(x)


def resolve_threads(threads: "int | None" = None) -> int:
    """Effective worker count: explicit arg, else VC_THREADS, else cpu count."""
    if threads is None:
        env = os.environ.get("VC_THREADS", "").strip()
        if env:
            try:
                threads = int(env)
            except ValueError:
                raise ValueError(f"VC_THREADS must be an integer, got {env!r}") from None
        else:
            threads = os.cpu_count() or 1
    if threads < 1:
        raise ValueError(f"thread count must be >= 1, got {threads}")
    return threads


def derived_rng(seed: int, *labels: str | int) -> np.random.Generator:
    """Generator whose stream depends on the master seed and a label path.

    Labels are hashed (crc32) so the stream for a given (seed, labels) pair is
    stable no matter which other streams were drawn first.
    """
    entropy = [seed & 0xFFFFFFFF]
    for lab in labels:
        if isinstance(lab, int):
            entropy.append(lab & 0xFFFFFFFF)
        else:
            entropy.append(zlib.crc32(str(lab).encode("utf-8")))
    return np.random.default_rng(np.random.SeedSequence(entropy))
