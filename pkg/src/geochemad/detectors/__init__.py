"""Anomaly scorers sharing the ``fit`` / ``score`` contract."""

from .base import KINDS, AnomalyScorer, as_array
from .iforest import IsolationForestConfig, IsolationForestDetector, average_path_length, isolation_forest
from .ocsvm import OCSVMConfig, OCSVMDetector, frank_wolfe_svdd, ocsvm, rbf_kernel
from .registry import detector_class, make_detector
from .snapshot import load_detector, save_detector
from .statistical import (
    KNNConfig,
    KNNDistanceDetector,
    MahalanobisConfig,
    MahalanobisDetector,
    ZScoreConfig,
    ZScoreDetector,
    knn_distance_score,
    mahalanobis_score,
    zscore_score,
)

__all__ = [
    "KINDS",
    "AnomalyScorer",
    "IsolationForestConfig",
    "IsolationForestDetector",
    "KNNConfig",
    "KNNDistanceDetector",
    "MahalanobisConfig",
    "MahalanobisDetector",
    "OCSVMConfig",
    "OCSVMDetector",
    "ZScoreConfig",
    "ZScoreDetector",
    "as_array",
    "average_path_length",
    "detector_class",
    "frank_wolfe_svdd",
    "isolation_forest",
    "knn_distance_score",
    "load_detector",
    "mahalanobis_score",
    "make_detector",
    "ocsvm",
    "rbf_kernel",
    "save_detector",
    "zscore_score",
]
