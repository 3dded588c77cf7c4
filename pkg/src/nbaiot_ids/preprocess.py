"""Per-feature z-score standardization and input shaping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nbaiot_ids.ingest import N_FEATURES, Dataset, Sample

STD_EPS = 1e-12


@dataclass(frozen=True)
class ScalerParams:
    """Per-feature mean and (guarded) population standard deviation."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64)
        std = np.array(self.std, dtype=np.float64)
        if mean.shape != std.shape or mean.ndim != 1:
            raise ValueError("mean and std must be 1-D vectors of equal length")
        if not np.all(std > 0):
            raise ValueError("std must be strictly positive")
        mean.flags.writeable = False
        std.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> ScalerParams:
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def fit_scaler(train: Dataset | np.ndarray) -> ScalerParams:
    """Fit mean and population std (divide by N) on training rows only.

    Features whose std falls below 1e-12 get std 1.0, so they standardize to 0.
    """
    x = train.features if isinstance(train, Dataset) else np.asarray(train, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("cannot fit a scaler on an empty training set")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    # An exactly constant column can still pick up rounding noise in its mean.
    constant = np.ptp(x, axis=0) == 0
    mean = np.where(constant, x[0], mean)
    std = np.where(constant | (std < STD_EPS), 1.0, std)
    return ScalerParams(mean, std)


def transform(scaler: ScalerParams, x: Sample | Dataset | np.ndarray) -> np.ndarray:
    """``(x - mean) / std`` for one feature vector or a batch of rows."""
    if isinstance(x, Sample):
        x = x.features
    elif isinstance(x, Dataset):
        x = x.features
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != scaler.n_features:
        raise ValueError(f"expected {scaler.n_features} features, got {x.shape[-1]}")
    return (x - scaler.mean) / scaler.std


def to_input_tensor(standardized: np.ndarray, seq_len: int = N_FEATURES) -> np.ndarray:
    """Reshape feature vectors into ``(seq_len, 1)`` sequences (leading batch axes kept)."""
    v = np.asarray(standardized)
    if v.shape[-1] != seq_len:
        raise ValueError(f"expected vectors of length {seq_len}, got {v.shape[-1]}")
    return v.reshape(*v.shape, 1)
