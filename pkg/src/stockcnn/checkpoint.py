"""JSON checkpoints.

Layout::

    {"format_version": 1,
     "spec": {...model architecture...},
     "params": {"layer0.W": {"shape": [...], "data": [...]}, ...},
     "prng_state": "<u64 as decimal string>",
     "optim": {"name": ..., "t": ..., "tensors": {...}},   # optional
     "config": {...},                                      # optional
     "progress": {...}}                                    # optional

Floats are written with ``repr``, which round-trips float64 exactly.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any

import numpy as np

from .errors import CheckpointError, ConfigError
from .nn.model import Model, ModelSpec
from .rng import Prng

FORMAT_VERSION = 1


def encode_tensor(arr: np.ndarray) -> dict:
    arr = np.asarray(arr, dtype=np.float64)
    return {"shape": list(arr.shape), "data": [float(v) for v in arr.reshape(-1)]}


def decode_tensor(obj: dict, name: str = "tensor") -> np.ndarray:
    try:
        shape = tuple(int(s) for s in obj["shape"])
        data = np.array(obj["data"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{name}: malformed tensor ({exc})") from None
    if data.ndim != 1 or data.size != int(np.prod(shape)):
        raise CheckpointError(f"{name}: {data.size} values do not fill shape {list(shape)}")
    return data.reshape(shape)


def write_json_atomic(obj: Any, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, allow_nan=False)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def save_checkpoint(path, model: Model, optim_state: dict | None = None, optim_name: str | None = None,
                    config: dict | None = None, progress: dict | None = None) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "spec": model.spec.to_json(),
        "params": {name: encode_tensor(model.params[name]) for name in sorted(model.params)},
        "prng_state": str(model.prng.state),
    }
    if optim_state is not None:
        doc["optim"] = {
            "name": optim_name,
            "t": int(optim_state["t"]),
            "tensors": {k: encode_tensor(v) for k, v in sorted(optim_state["tensors"].items())},
        }
    if config is not None:
        doc["config"] = config
    if progress is not None:
        doc["progress"] = progress
    write_json_atomic(doc, path)


def load_checkpoint(path) -> dict:
    """Load and fully validate a checkpoint.

    Returns a dict with ``model`` (a :class:`Model`), ``optim`` (``None`` or
    ``{"name", "t", "tensors"}``), ``config`` and ``progress`` (possibly ``None``).
    Nothing is returned unless the whole document is consistent.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: corrupt or truncated checkpoint ({exc})") from None
    if not isinstance(doc, dict):
        raise CheckpointError(f"{path}: checkpoint must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format_version {version!r} (expected {FORMAT_VERSION})")
    for key in ("spec", "params", "prng_state"):
        if key not in doc:
            raise CheckpointError(f"{path}: missing {key!r}")
    try:
        spec = ModelSpec.from_json(doc["spec"])
        params = {name: decode_tensor(obj, name) for name, obj in doc["params"].items()}
        prng = Prng(int(doc["prng_state"]))
        model = Model(spec, prng, params)
    except (ConfigError, ValueError, TypeError, AttributeError) as exc:
        raise CheckpointError(f"{path}: inconsistent checkpoint: {exc}") from None

    optim = doc.get("optim")
    if optim is not None:
        try:
            optim = {
                "name": optim["name"],
                "t": int(optim["t"]),
                "tensors": {k: decode_tensor(v, k) for k, v in optim["tensors"].items()},
            }
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"{path}: malformed optimizer state: {exc}") from None
        for key, arr in optim["tensors"].items():
            pname = key.rsplit(".", 1)[0]
            if pname not in params or params[pname].shape != arr.shape:
                raise CheckpointError(f"{path}: optimizer tensor {key} does not match model parameters")
    return {"model": model, "optim": optim, "config": doc.get("config"), "progress": doc.get("progress")}
