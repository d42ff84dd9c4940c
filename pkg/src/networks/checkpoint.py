"""
Checkpoint Files
================
Layout: magic b"SAFC", u64 manifest length, UTF-8 JSON manifest, then the
tensor blobs in the flat tensor format, back to back.

The manifest maps every tensor name to {shape, dtype, offset, length}
(offsets relative to the first blob) and carries a free-form `meta`
section: network config, optimizer step, training progress, RNG state.
"""

from __future__ import annotations

import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np

from src.tensor.nn import Module
from src.tensor.serialization import TensorFormatError, decode_tensor, encode_tensor

logger = logging.getLogger("networks")

CHECKPOINT_MAGIC = b"SAFC"
FORMAT_VERSION = 1


def module_tensors(modules: Mapping[str, Module]) -> Dict[str, np.ndarray]:
    """Flatten {"depth": net, "pose": net} into {"depth.encoder...": array}."""
    out: Dict[str, np.ndarray] = {}
    for prefix, module in modules.items():
        for name, arr in module.state_dict().items():
            out[f"{prefix}.{name}"] = arr
    return out


def section(tensors: Mapping[str, np.ndarray], prefix: str) -> Dict[str, np.ndarray]:
    """Tensors under `prefix.` with the prefix stripped."""
    cut = len(prefix) + 1
    return {name[cut:]: arr for name, arr in tensors.items() if name.startswith(prefix + ".")}


def save_checkpoint(path: Union[str, Path], tensors: Mapping[str, np.ndarray], meta: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blobs = []
    entries = {}
    offset = 0
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        blob = encode_tensor(arr)
        entries[name] = {"shape": list(arr.shape), "dtype": "float64", "offset": offset, "length": len(blob)}
        blobs.append(blob)
        offset += len(blob)
    manifest = json.dumps({"version": FORMAT_VERSION, "tensors": entries, "meta": meta or {}}).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<Q", len(manifest)))
        f.write(manifest)
        for blob in blobs:
            f.write(blob)
    logger.info(f"Saved checkpoint {path} ({len(entries)} tensors)")
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    buf = Path(path).read_bytes()
    if buf[:4] != CHECKPOINT_MAGIC:
        raise TensorFormatError(f"{path} is not a checkpoint file")
    if len(buf) < 12:
        raise TensorFormatError("Truncated checkpoint header")
    (length,) = struct.unpack_from("<Q", buf, 4)
    start = 12 + length
    if len(buf) < start:
        raise TensorFormatError("Truncated checkpoint manifest")
    try:
        manifest = json.loads(buf[12:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise TensorFormatError(f"Unreadable checkpoint manifest: {e}") from e

    tensors: Dict[str, np.ndarray] = {}
    for name, entry in manifest.get("tensors", {}).items():
        arr, end = decode_tensor(buf, start + entry["offset"])
        if end - (start + entry["offset"]) != entry["length"] or list(arr.shape) != entry["shape"]:
            raise TensorFormatError(f"Manifest entry for '{name}' does not match its blob")
        tensors[name] = arr
    return tensors, manifest.get("meta", {})
