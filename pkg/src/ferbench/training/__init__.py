from .early_stop import CONTINUE, STOP, early_stop_decision
from .folds import FoldSplit, folds_from_json, folds_to_json, make_folds
from .models import ARCHITECTURES, build_model, register_architecture
from .trainer import (AugmentationConfig, Augmenter, TrainedModelHandle, TrainingConfig,
                      load_trained_model, train_model)
from .weights import compute_class_weights

__all__ = [
    "CONTINUE", "STOP", "early_stop_decision",
    "FoldSplit", "make_folds", "folds_to_json", "folds_from_json",
    "ARCHITECTURES", "build_model", "register_architecture",
    "AugmentationConfig", "Augmenter", "TrainingConfig", "TrainedModelHandle",
    "train_model", "load_trained_model",
    "compute_class_weights",
]
