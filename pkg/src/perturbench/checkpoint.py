"""Checkpoint persistence: JSON manifest plus a little-endian float64 blob.

The manifest lists every tensor's name and shape in a canonical model order;
the blob stores the corresponding values contiguously in that order. Loading
verifies the format version, the tensor count and order against the declared
architecture, and the exact blob length, each failure carrying a specific
error code.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .training import Checkpoint, model_from_checkpoint

FORMAT_VERSION = 1

ERROR_CODES = (
    "version_mismatch",
    "malformed_manifest",
    "tensor_count_mismatch",
    "manifest_order_mismatch",
    "blob_length_mismatch",
    "shape_mismatch",
)


class CheckpointError(RuntimeError):
    def __init__(self, code: str, message: str):
        assert code in ERROR_CODES
        super().__init__(f"[{code}] {message}")
        self.code = code


def _paths(path: str) -> tuple[str, str]:
    base = str(path)
    if base.endswith(".json"):
        base = base[:-5]
    return base + ".json", base + ".bin"


def expected_tensor_names(ckpt: Checkpoint) -> list[str]:
    """Canonical tensor order implied by the checkpoint's architecture."""
    model = model_from_checkpoint(ckpt)
    return [name for name, _ in model.state_tensors()]


def save_checkpoint(ckpt: Checkpoint, path: str) -> tuple[str, str]:
    """Write manifest and blob; returns the two file paths."""
    manifest_path, blob_path = _paths(path)
    blob = b"".join(arr.astype("<f8").tobytes() for _, arr in ckpt.tensors)
    manifest = {
        "format_version": FORMAT_VERSION,
        "algo": ckpt.algo,
        "scenario": ckpt.scenario,
        "meta": ckpt.meta,
        "tensors": [
            {"name": name, "shape": list(arr.shape)} for name, arr in ckpt.tensors
        ],
        "blob_bytes": len(blob),
        "curve": [[int(s), float(m), float(v)] for s, m, v in ckpt.curve],
    }
    os.makedirs(os.path.dirname(manifest_path) or ".", exist_ok=True)
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, separators=(",", ":"))
    with open(blob_path, "wb") as fh:
        fh.write(blob)
    return manifest_path, blob_path


def load_checkpoint(path: str) -> Checkpoint:
    manifest_path, blob_path = _paths(path)
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError("malformed_manifest", f"cannot read manifest: {exc}")
    for key in ("format_version", "algo", "scenario", "tensors", "blob_bytes"):
        if key not in manifest:
            raise CheckpointError("malformed_manifest", f"manifest misses key {key!r}")
    if manifest["format_version"] != FORMAT_VERSION:
        raise CheckpointError(
            "version_mismatch",
            f"format version {manifest['format_version']} != {FORMAT_VERSION}",
        )
    with open(blob_path, "rb") as fh:
        blob = fh.read()
    if len(blob) != manifest["blob_bytes"]:
        raise CheckpointError(
            "blob_length_mismatch",
            f"blob holds {len(blob)} bytes, manifest declares {manifest['blob_bytes']}",
        )
    entries = manifest["tensors"]
    declared = sum(int(np.prod(e["shape"])) for e in entries) * 8
    if declared != len(blob):
        raise CheckpointError(
            "blob_length_mismatch",
            f"tensor shapes need {declared} bytes, blob holds {len(blob)}",
        )
    tensors = []
    offset = 0
    for entry in entries:
        shape = tuple(int(s) for s in entry["shape"])
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        tensors.append((entry["name"], arr.astype(np.float64).reshape(shape)))
        offset += count * 8
    ckpt = Checkpoint(
        algo=manifest["algo"],
        scenario=manifest["scenario"],
        meta=manifest.get("meta", {}),
        tensors=tensors,
        curve=[tuple(row) for row in manifest.get("curve", [])],
    )
    try:
        expected = expected_tensor_names(ckpt)
    except ValueError as exc:
        raise CheckpointError("tensor_count_mismatch", str(exc))
    names = [name for name, _ in tensors]
    if len(names) != len(expected):
        raise CheckpointError(
            "tensor_count_mismatch",
            f"manifest lists {len(names)} tensors, architecture defines {len(expected)}",
        )
    if names != expected:
        raise CheckpointError(
            "manifest_order_mismatch",
            "manifest tensor order does not match the canonical architecture order",
        )
    return ckpt
