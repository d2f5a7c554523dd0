from .coupling_service import CouplingSampler
from .model_service import ModelField
from .training_service import MmdEvaluator, TrainClock, TrainingService, get_training_service, train

__all__ = [
    "CouplingSampler",
    "ModelField",
    "MmdEvaluator", "TrainClock", "TrainingService", "get_training_service", "train",
]
