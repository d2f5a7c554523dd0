from .data import PointCloud
from .quantization import AnchorQuantization
from .transport import TransportPlan
from .bridge import BridgeSample
from .model import AdamHyper, AdamState, MlpParams, ModelBundle
from .training import (
    METRICS_COLUMNS, MetricsLog, MetricsRow, MmdSpec, RunManifest, SimConfig, TrainConfig
)
from .verification import RECORD_COLUMNS, StabilityRecord, StabilityReport

__all__ = [
    # Data schemas
    "PointCloud", "AnchorQuantization", "TransportPlan", "BridgeSample",

    # Model schemas
    "AdamHyper", "AdamState", "MlpParams", "ModelBundle",

    # Run schemas
    "METRICS_COLUMNS", "MetricsLog", "MetricsRow", "MmdSpec", "RunManifest",
    "SimConfig", "TrainConfig",

    # Verification schemas
    "RECORD_COLUMNS", "StabilityRecord", "StabilityReport",
]
