"""Hybrid 1D-CNN + ConvNeXt intrusion detector for N-BaIoT traffic, in plain numpy."""

from nbaiot_ids.errors import DataError, ModelFormatError, NumericError
from nbaiot_ids.ingest import (
    DEFAULT_CLASS_MAP,
    N_FEATURES,
    ClassMap,
    Dataset,
    DatasetSplit,
    Sample,
    class_counts,
    load_dataset,
    split_dataset,
)
from nbaiot_ids.preprocess import ScalerParams, fit_scaler, to_input_tensor, transform

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_CLASS_MAP",
    "N_FEATURES",
    "ClassMap",
    "DataError",
    "Dataset",
    "DatasetSplit",
    "ModelFormatError",
    "NumericError",
    "Sample",
    "ScalerParams",
    "class_counts",
    "fit_scaler",
    "load_dataset",
    "split_dataset",
    "to_input_tensor",
    "transform",
]
