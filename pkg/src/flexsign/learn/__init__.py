"""The six classifiers behind one fit/predict/persist contract."""
from .models import (KINDS, MODEL_NAMES, PRESETS, ClassifierSpec, DimensionMismatch,
                     ModelError, TrainedModel, fit, predict, predict_batch,
                     predict_dataset, preset)
from .persist import (ModelFormatError, ModelVersionError, dumps_model, load_model,
                      loads_model, save_model)
from .tree import best_split, gini

__all__ = [
    "KINDS", "MODEL_NAMES", "PRESETS", "ClassifierSpec", "DimensionMismatch",
    "ModelError", "TrainedModel", "fit", "predict", "predict_batch", "predict_dataset",
    "preset", "ModelFormatError", "ModelVersionError", "dumps_model", "load_model",
    "loads_model", "save_model", "best_split", "gini",
]
