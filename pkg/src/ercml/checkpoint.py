"""Self-describing checkpoint container.

A checkpoint is an .npz archive holding named float64 tensors plus one
JSON metadata entry carrying the format version, the checkpoint kind,
the seed, and a verbatim config echo. Tensors are namespaced with dots
("encoder.w_q", "head.w") so composite models flatten cleanly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import CheckpointError

FORMAT_VERSION = 1
_META_KEY = "__meta__"


def save_checkpoint(
    path: str | Path,
    kind: str,
    tensors: dict[str, np.ndarray],
    meta: dict | None = None,
) -> Path:
    """Write tensors plus metadata; parent directories are created."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = dict(meta or {})
    payload["format_version"] = FORMAT_VERSION
    payload["kind"] = kind
    payload["tensor_names"] = sorted(tensors)
    arrays = {f"t::{name}": np.asarray(arr, dtype=float) for name, arr in tensors.items()}
    arrays[_META_KEY] = np.array(json.dumps(payload, sort_keys=True))
    np.savez(path, **arrays)
    return path


def load_checkpoint(path: str | Path, expect_kind: str | None = None):
    """Read a checkpoint; returns (kind, tensors dict, meta dict).

    Raises:
        CheckpointError: file absent/unreadable, not a checkpoint, or of
            a different kind than expected.
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as archive:
            if _META_KEY not in archive:
                raise CheckpointError(f"{path} is not an ercml checkpoint (no metadata entry)")
            meta = json.loads(str(archive[_META_KEY]))
            tensors = {
                key[len("t::"):]: archive[key] for key in archive.files if key.startswith("t::")
            }
    except (ValueError, OSError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if meta.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {meta.get('format_version')} != {FORMAT_VERSION}"
        )
    kind = meta.get("kind", "")
    if expect_kind is not None and kind != expect_kind:
        raise CheckpointError(f"{path}: checkpoint kind {kind!r}, expected {expect_kind!r}")
    return kind, tensors, meta
