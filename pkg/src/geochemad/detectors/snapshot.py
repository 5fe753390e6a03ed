"""Structured-text snapshots of fitted detectors.

A snapshot is a JSON document::

    {"format": "geochemad.detector", "version": 1,
     "kind": ..., "config": {...}, "state": {...}, "metadata": {...}}

State values that are arrays are stored as
``{"__ndarray__": true, "dtype": ..., "shape": [...], "data": [...]}`` with
floats written by ``repr`` so a load restores them bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from .base import AnomalyScorer
from .registry import detector_class

FORMAT = "geochemad.detector"
VERSION = 1


def _encode(value):
    if isinstance(value, np.ndarray) or isinstance(value, np.generic):
        arr = np.asarray(value)
        return {"__ndarray__": True, "dtype": arr.dtype.str, "shape": list(arr.shape),
                "data": arr.reshape(-1).tolist()}
    if isinstance(value, dict):
        return {k: _encode(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_encode(v) for v in value]
    return value


def _decode(value):
    if isinstance(value, dict):
        if value.get("__ndarray__"):
            return np.array(value["data"], dtype=np.dtype(value["dtype"])).reshape(value["shape"])
        return {k: _decode(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_decode(v) for v in value]
    return value


def to_document(detector: AnomalyScorer, metadata: dict | None = None) -> dict:
    detector._check_fitted()
    return {
        "format": FORMAT,
        "version": VERSION,
        "kind": detector.kind,
        "config": _encode(detector.config_dict()),
        "state": _encode(detector.get_state()),
        "metadata": _encode(metadata or {}),
    }


def from_document(doc: dict) -> tuple[AnomalyScorer, dict]:
    if doc.get("format") != FORMAT:
        raise ConfigError("not a detector snapshot")
    if doc.get("version") != VERSION:
        raise ConfigError(f"unsupported snapshot version {doc.get('version')}")
    cls = detector_class(doc["kind"])
    config = _decode(doc["config"])
    config = {k: tuple(v) if isinstance(v, list) else v for k, v in config.items()}
    det = cls(**config)
    det.set_state(_decode(doc["state"]))
    return det, _decode(doc.get("metadata", {}))


def save_detector(detector: AnomalyScorer, path, metadata: dict | None = None) -> Path:
    path = Path(path)
    path.write_text(json.dumps(to_document(detector, metadata), sort_keys=True))
    return path


def load_detector(path) -> tuple[AnomalyScorer, dict]:
    return from_document(json.loads(Path(path).read_text()))
