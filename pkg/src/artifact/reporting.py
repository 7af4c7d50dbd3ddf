"""Canonical report serialization.

Every JSON artifact the toolkit writes goes through canonical_json so that a
rerun with the same seed produces byte-identical files: keys sorted, two-space
indent, trailing newline, and no timestamps anywhere.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

import numpy as np


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_text(text: str) -> str:
    return sha256_bytes(text.encode("utf-8"))


def _plain(obj: Any) -> Any:
    """Recursively convert numpy scalars/arrays and tuples to JSON-safe types."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        raise ValueError(f"non-finite value {obj} cannot enter a report")
    return obj


def canonical_json(obj: Any) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def write_report(path: str | Path, obj: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json(obj), encoding="utf-8")
    return path


def read_report(path: str | Path) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def report_envelope(kind: str, snapshot_hash: str, dataset_hashes: dict[str, str],
                    params: dict[str, Any], body: dict[str, Any]) -> dict[str, Any]:
    """Standard wrapper: what produced this report, from which inputs."""
    return {
        "kind": kind,
        "snapshot_hash": snapshot_hash,
        "dataset_hashes": dict(dataset_hashes),
        "params": _plain(params),
        "body": _plain(body),
    }
