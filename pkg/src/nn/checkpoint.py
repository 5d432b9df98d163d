"""json checkpoints of module parameters

floats are written with their shortest round-trip repr, so loading a saved
checkpoint restores every parameter bit for bit
"""
import json
import logging
from typing import Any, Dict, Optional

import numpy as np

from ..errors import ShapeError, WorkloadIOError
from ..utility import FORMAT_VERSION, atomic_write_text
from .layers import Module

logger = logging.getLogger(__name__)


def state_dict(module: Module) -> Dict[str, Dict[str, Any]]:
    """name -> {shape, values} for every parameter"""
    return {name: {"shape": list(p.shape), "values": [float(v) for v in p.data.reshape(-1)]}
            for name, p in module.named_parameters()}


def load_state_dict(module: Module, state: Dict[str, Dict[str, Any]]) -> None:
    """copy saved values into the module's parameters

    Raises:
        ShapeError when names or shapes do not match the module
    """
    params = dict(module.named_parameters())
    missing = set(params) - set(state)
    unexpected = set(state) - set(params)
    if missing or unexpected:
        raise ShapeError(f"checkpoint does not match the model (missing: {sorted(missing)}, "
                         f"unexpected: {sorted(unexpected)})")
    for name, param in params.items():
        shape = tuple(state[name]["shape"])
        if shape != param.shape:
            raise ShapeError(f"parameter {name}: checkpoint shape {shape} differs from model shape {param.shape}")
        param.data[...] = np.asarray(state[name]["values"], dtype=np.float64).reshape(shape)


def save_checkpoint(path: str, module: Module, architecture: Dict[str, Any],
                    extra: Optional[Dict[str, Any]] = None) -> None:
    """write {format_version, architecture, parameters, **extra} atomically

    Raises:
        WorkloadIOError with the path when the write fails
    """
    document = {"format_version": FORMAT_VERSION, "architecture": architecture,
                "parameters": state_dict(module), **(extra or {})}
    try:
        atomic_write_text(path, json.dumps(document, sort_keys=True))
    except OSError as e:
        raise WorkloadIOError(path, f"write failed: {e.strerror or e}") from e
    logger.info("Saved checkpoint to %s", path)


def read_checkpoint(path: str) -> Dict[str, Any]:
    """read a checkpoint document without building a model

    Raises:
        WorkloadIOError with the path when the file is unreadable or malformed
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except OSError as e:
        raise WorkloadIOError(path, f"read failed: {e.strerror or e}") from e
    except json.JSONDecodeError as e:
        raise WorkloadIOError(path, f"invalid json: {e}") from e
    if document.get("format_version") != FORMAT_VERSION:
        raise WorkloadIOError(path, f"unsupported format_version {document.get('format_version')!r}")
    for key in ("architecture", "parameters"):
        if key not in document:
            raise WorkloadIOError(path, f"missing {key!r}")
    return document
