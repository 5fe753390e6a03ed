"""Two-stage transformer anomaly detector and its context-free ablation."""

from .detector import GeoChemFormerDetector, T1Detector
from .model import EdmModel, GeoChemFormerConfig, SclModel, sinusoidal_encoding_2d
from .tokens import (
    CoordinateFrame,
    NeighborToken,
    SclSequence,
    TokenBatch,
    build_neighborhood_tokens,
    build_token_batch,
    canonical_order,
    neighbor_table,
)
from .training import (
    SclResult,
    SpatialContext,
    edm_loss,
    edm_reconstruct,
    edm_score,
    edm_train,
    scl_loss,
    scl_predict,
    scl_train,
    t1_score,
)

__all__ = [
    "CoordinateFrame",
    "EdmModel",
    "GeoChemFormerConfig",
    "GeoChemFormerDetector",
    "NeighborToken",
    "SclModel",
    "SclResult",
    "SclSequence",
    "SpatialContext",
    "T1Detector",
    "TokenBatch",
    "build_neighborhood_tokens",
    "build_token_batch",
    "canonical_order",
    "edm_loss",
    "edm_reconstruct",
    "edm_score",
    "edm_train",
    "neighbor_table",
    "scl_loss",
    "scl_predict",
    "scl_train",
    "sinusoidal_encoding_2d",
    "t1_score",
]
