"""Map detector kind names to scorer classes.

Neural kinds live in other subpackages, so they are imported on first use.
"""

from __future__ import annotations

import importlib

from ..errors import ConfigError
from .base import KINDS, AnomalyScorer

_LOCATIONS = {
    "zscore": ("geochemad.detectors.statistical", "ZScoreDetector"),
    "mahalanobis": ("geochemad.detectors.statistical", "MahalanobisDetector"),
    "knn_dist": ("geochemad.detectors.statistical", "KNNDistanceDetector"),
    "isolation_forest": ("geochemad.detectors.iforest", "IsolationForestDetector"),
    "ocsvm": ("geochemad.detectors.ocsvm", "OCSVMDetector"),
    "ae": ("geochemad.nn.autoencoders", "AutoencoderDetector"),
    "vae": ("geochemad.nn.autoencoders", "VAEDetector"),
    "t1": ("geochemad.geochemformer.detector", "T1Detector"),
    "geochemformer": ("geochemad.geochemformer.detector", "GeoChemFormerDetector"),
}


def detector_class(kind: str) -> type[AnomalyScorer]:
    if kind not in _LOCATIONS:
        raise ConfigError(f"unknown detector kind {kind!r}; expected one of {', '.join(KINDS)}")
    module, name = _LOCATIONS[kind]
    return getattr(importlib.import_module(module), name)


def make_detector(kind: str, **params) -> AnomalyScorer:
    """Instantiate a detector from its kind and hyperparameter overrides."""
    cls = detector_class(kind)
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {kind}: {exc}") from None
