"""
Checkpoints are a JSON manifest plus a companion raw binary.

    run/vlm.json   {"format": "dusss-ckpt/1", "dtype": "float32",
                    "tensors": [{"name", "shape", "offset"}], "meta": {...}}
    run/vlm.bin    little-endian tensor bytes, concatenated in manifest order
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from dusss.errors import CheckpointError

logger = logging.getLogger(__name__)

FORMAT = "dusss-ckpt/1"
_DTYPES = {"float32": "<f4", "float64": "<f8"}


class CheckpointRepository:
    def _paths(self, path: Union[str, Path]) -> Tuple[Path, Path]:
        path = Path(path)
        manifest = path if path.suffix == ".json" else path.with_suffix(".json")
        return manifest, manifest.with_suffix(".bin")

    def save(self, path: Union[str, Path], state: Dict[str, np.ndarray], meta: Optional[Dict[str, Any]] = None) -> Path:
        """Write manifest and binary; every tensor must share one float dtype"""
        manifest_path, blob_path = self._paths(path)
        dtypes = {np.asarray(v).dtype.name for v in state.values()}
        if len(dtypes) > 1:
            raise CheckpointError(f"save_checkpoint: mixed dtypes {sorted(dtypes)}")
        dtype = dtypes.pop() if dtypes else "float32"
        if dtype not in _DTYPES:
            raise CheckpointError(f"save_checkpoint: unsupported dtype {dtype}")

        entries, chunks, offset = [], [], 0
        for name, value in state.items():
            raw = np.ascontiguousarray(value, dtype=_DTYPES[dtype]).tobytes()
            entries.append({"name": name, "shape": list(np.shape(value)), "offset": offset})
            chunks.append(raw)
            offset += len(raw)

        manifest_path.parent.mkdir(parents=True, exist_ok=True)
        blob_path.write_bytes(b"".join(chunks))
        manifest = {"format": FORMAT, "dtype": dtype, "tensors": entries, "meta": meta or {}}
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        logger.info("saved checkpoint %s (%d tensors, %d bytes)", manifest_path, len(entries), offset)
        return manifest_path

    def load(self, path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
        """(state, meta) with tensors in their stored dtype"""
        manifest_path, blob_path = self._paths(path)
        if not manifest_path.is_file() or not blob_path.is_file():
            raise CheckpointError(f"load_checkpoint: missing {manifest_path} or {blob_path}")
        try:
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"load_checkpoint: malformed manifest {manifest_path}: {exc}") from None
        if manifest.get("format") != FORMAT:
            raise CheckpointError(f"load_checkpoint: unknown format {manifest.get('format')!r}")
        dtype = manifest.get("dtype")
        if dtype not in _DTYPES:
            raise CheckpointError(f"load_checkpoint: unsupported dtype {dtype!r}")

        blob = blob_path.read_bytes()
        itemsize = np.dtype(_DTYPES[dtype]).itemsize
        state: Dict[str, np.ndarray] = {}
        for entry in manifest.get("tensors", []):
            shape = tuple(entry["shape"])
            count = int(np.prod(shape, dtype=np.int64))
            start, end = entry["offset"], entry["offset"] + count * itemsize
            if end > len(blob):
                raise CheckpointError(f"load_checkpoint: {entry['name']} runs past the end of {blob_path}")
            array = np.frombuffer(blob[start:end], dtype=_DTYPES[dtype]).reshape(shape)
            state[entry["name"]] = array.astype(np.dtype(dtype), copy=True)
        return state, manifest.get("meta", {})


# Singleton instance
checkpoint_repo_ins = CheckpointRepository()
