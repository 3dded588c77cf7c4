"""N-BaIoT loading, class mapping and stratified splitting.

The on-disk layout is the one distributed by UCI::

    <root>/<device>/benign_traffic.csv
    <root>/<device>/gafgyt_attacks/{combo,junk,scan,tcp,udp}.csv
    <root>/<device>/mirai_attacks/{ack,scan,syn,udp,udpplain}.csv

Each CSV has one header row naming the 115 traffic statistics. A :class:`ClassMap`
assigns label indices by glob pattern relative to the root, so flattened layouts
(e.g. ``1.gafgyt.combo.csv``) only need a different map.

Randomness
----------
Every random draw in this module comes from numpy's Philox4x64 counter-based
generator keyed by ``SeedSequence([seed, stream, class_index])`` where ``stream``
is 0 for per-class subsampling and 1 for split shuffling. Given the same rows in
the same (class, file, row) order, any implementation using Philox with that key
reproduces the same subsamples and splits.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from nbaiot_ids.errors import DataError

N_FEATURES = 115

_STREAM_SUBSAMPLE = 0
_STREAM_SPLIT = 1

CACHE_MAGIC = b"NBIO1"


def philox_rng(seed: int, *key: int) -> np.random.Generator:
    """Philox4x64 generator keyed by ``(seed, *key)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *key])))


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    label: int


@dataclass(frozen=True)
class ClassMap:
    """Ordered ``(class name, glob pattern)`` pairs; position is the label index."""

    entries: tuple[tuple[str, str], ...]

    def __post_init__(self):
        names = [name for name, _ in self.entries]
        if not names:
            raise ValueError("class map is empty")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate class names in class map: {names}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def from_file(cls, path: str | Path) -> ClassMap:
        """Read a class map from JSON or a plain ``name = pattern`` text file.

        JSON may be an object (``{"benign": "*/benign_traffic.csv", ...}``, key
        order is label order) or a list of ``{"name": ..., "pattern": ...}``.
        """
        path = Path(path)
        text = path.read_text()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError:
            entries = []
            for lineno, line in enumerate(text.splitlines(), 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise DataError(f"{path}:{lineno}: expected 'name = pattern'")
                name, pattern = (part.strip() for part in line.split("=", 1))
                entries.append((name, pattern))
            return cls(tuple(entries))
        if isinstance(raw, dict):
            return cls(tuple((str(k), str(v)) for k, v in raw.items()))
        if isinstance(raw, list):
            return cls(tuple((str(e["name"]), str(e["pattern"])) for e in raw))
        raise DataError(f"{path}: class map must be a JSON object or list")

    def to_json(self) -> str:
        return json.dumps(dict(self.entries), indent=2)


# Benign plus the seven attacks analysed, in the report order used throughout.
DEFAULT_CLASS_MAP = ClassMap(
    (
        ("benign", "*/benign_traffic.csv"),
        ("mirai_udp", "*/mirai_attacks/udp.csv"),
        ("gafgyt_combo", "*/gafgyt_attacks/combo.csv"),
        ("gafgyt_junk", "*/gafgyt_attacks/junk.csv"),
        ("gafgyt_scan", "*/gafgyt_attacks/scan.csv"),
        ("mirai_ack", "*/mirai_attacks/ack.csv"),
        ("mirai_syn", "*/mirai_attacks/syn.csv"),
        ("mirai_udpplain", "*/mirai_attacks/udpplain.csv"),
    )
)


@dataclass(frozen=True)
class Dataset:
    """Immutable feature matrix ``(N, 115)`` with integer labels.

    ``devices`` optionally records which device directory each row came from;
    it is provenance only and plays no part in training or splitting.
    """

    features: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]
    devices: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {features.shape}")
        if features.shape[0] != labels.shape[0]:
            raise DataError("features and labels differ in length")
        if labels.size and (labels.min() < 0 or labels.max() >= len(self.class_names)):
            raise DataError("label outside the class map")
        if not np.all(np.isfinite(features)):
            raise DataError("non-finite feature value")
        features.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", tuple(self.class_names))

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.labels.shape[0]

    def __getitem__(self, i: int) -> Sample:
        return Sample(self.features[i], int(self.labels[i]))

    def __iter__(self) -> Iterator[Sample]:
        for i in range(len(self)):
            yield self[i]

    def subset(self, indices: np.ndarray) -> Dataset:
        indices = np.asarray(indices, dtype=np.int64)
        devices = None
        if self.devices is not None:
            devices = tuple(self.devices[i] for i in indices)
        return Dataset(self.features[indices], self.labels[indices], self.class_names, devices)

    @classmethod
    def from_samples(cls, samples: Sequence[Sample], class_names: Sequence[str]) -> Dataset:
        if samples:
            x = np.stack([np.asarray(s.features, dtype=np.float64) for s in samples])
        else:
            x = np.zeros((0, N_FEATURES))
        y = np.array([s.label for s in samples], dtype=np.int64)
        return cls(x, y, tuple(class_names))


def _locate_bad_row(path: Path, n_cols: int, header: bool = True) -> None:
    """Re-scan a CSV that failed fast parsing and raise a DataError at the offending line."""
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        if header:
            next(reader, None)
        for row in reader:
            lineno = reader.line_num
            if not row:
                continue
            if len(row) != n_cols:
                raise DataError(f"{path}:{lineno}: expected {n_cols} columns, found {len(row)}")
            for col, cell in enumerate(row):
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}:{lineno}: column {col + 1} is not numeric: {cell!r}"
                    ) from None
                if not math.isfinite(value):
                    raise DataError(f"{path}:{lineno}: column {col + 1} is not finite: {cell!r}")


def read_feature_csv(path: str | Path, n_features: int = N_FEATURES, header: bool = True) -> np.ndarray:
    """Parse one feature CSV into a float64 ``(rows, n_features)`` array."""
    path = Path(path)
    if header:
        with path.open(newline="") as fh:
            first = next(csv.reader(fh), None)
        if first is None:
            raise DataError(f"{path}: empty file, expected a header row")
        if len(first) != n_features:
            raise DataError(f"{path}:1: header has {len(first)} columns, expected {n_features}")
    try:
        frame = pd.read_csv(
            path,
            header=0 if header else None,
            dtype=np.float64,
            engine="c",
            skip_blank_lines=True,
        )
    except (ValueError, pd.errors.ParserError):
        _locate_bad_row(path, n_features, header)
        raise
    values = frame.to_numpy(dtype=np.float64)
    if values.shape[1] != n_features or not np.all(np.isfinite(values)):
        _locate_bad_row(path, n_features, header)
        raise DataError(f"{path}: expected {n_features} finite numeric columns")
    return values


def load_dataset(
    root: str | Path,
    class_map: ClassMap = DEFAULT_CLASS_MAP,
    per_class_cap: int | None = None,
    seed: int = 0,
) -> Dataset:
    """Load every file matched by ``class_map`` under ``root``.

    Rows are ordered by (class, file path, row). With ``per_class_cap`` each class is
    uniformly subsampled without replacement to at most that many rows, keeping the
    surviving rows in their original order.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root {root} is not a directory")
    if per_class_cap is not None and per_class_cap < 0:
        raise ValueError("per_class_cap must be non-negative")

    blocks: list[np.ndarray] = []
    labels: list[np.ndarray] = []
    devices: list[str] = []
    for label, (name, pattern) in enumerate(class_map.entries):
        files = sorted(p for p in root.glob(pattern) if p.is_file())
        if not files:
            raise DataError(f"class {name!r}: no files match {pattern!r} under {root}")
        parts = [read_feature_csv(p) for p in files]
        rows = np.concatenate(parts) if parts else np.zeros((0, N_FEATURES))
        row_devices = [
            p.relative_to(root).parts[0] for p, part in zip(files, parts) for _ in range(len(part))
        ]
        if per_class_cap is not None and len(rows) > per_class_cap:
            keep = philox_rng(seed, _STREAM_SUBSAMPLE, label).choice(
                len(rows), size=per_class_cap, replace=False
            )
            keep.sort()
            rows = rows[keep]
            row_devices = [row_devices[i] for i in keep]
        blocks.append(rows)
        labels.append(np.full(len(rows), label, dtype=np.int64))
        devices.extend(row_devices)

    return Dataset(np.concatenate(blocks), np.concatenate(labels), class_map.names, tuple(devices))


def class_counts(labels: Dataset | np.ndarray | Sequence[int], n_classes: int | None = None) -> np.ndarray:
    """Number of samples per label index."""
    if isinstance(labels, Dataset):
        n_classes = labels.n_classes if n_classes is None else n_classes
        labels = labels.labels
    labels = np.asarray(labels, dtype=np.int64)
    if n_classes is None:
        n_classes = int(labels.max()) + 1 if labels.size else 0
    return np.bincount(labels, minlength=n_classes)[:n_classes]


@dataclass(frozen=True)
class DatasetSplit:
    """Index-based train/validation/test partition of ``dataset``."""

    dataset: Dataset
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    seed: int
    fractions: tuple[float, float]

    @property
    def train(self) -> Dataset:
        return self.dataset.subset(self.train_idx)

    @property
    def validation(self) -> Dataset:
        return self.dataset.subset(self.val_idx)

    @property
    def test(self) -> Dataset:
        return self.dataset.subset(self.test_idx)

    def part(self, name: str) -> Dataset:
        try:
            idx = {"train": self.train_idx, "val": self.val_idx, "test": self.test_idx}[name]
        except KeyError:
            raise ValueError(f"unknown split {name!r}; use train, val or test") from None
        return self.dataset.subset(idx)

    def manifest(self) -> dict:
        return {
            "seed": self.seed,
            "test_frac": self.fractions[0],
            "val_frac": self.fractions[1],
            "class_names": list(self.dataset.class_names),
            "n_samples": len(self.dataset),
            "train": self.train_idx.tolist(),
            "val": self.val_idx.tolist(),
            "test": self.test_idx.tolist(),
        }

    @classmethod
    def from_manifest(cls, dataset: Dataset, manifest: dict) -> DatasetSplit:
        if manifest["n_samples"] != len(dataset):
            raise DataError("split manifest does not match the dataset size")
        if tuple(manifest["class_names"]) != dataset.class_names:
            raise DataError("split manifest class names do not match the dataset")
        return cls(
            dataset,
            np.asarray(manifest["train"], dtype=np.int64),
            np.asarray(manifest["val"], dtype=np.int64),
            np.asarray(manifest["test"], dtype=np.int64),
            int(manifest["seed"]),
            (float(manifest["test_frac"]), float(manifest["val_frac"])),
        )


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_dataset(dataset: Dataset, test_frac: float = 0.2, val_frac: float = 0.1, seed: int = 0) -> DatasetSplit:
    """Stratified split: per class, round(frac * n) rows go to test and validation.

    Rows of class ``c`` are permuted with ``philox_rng(seed, 1, c)``; the first
    block goes to test, the next to validation, the rest to train.
    """
    if len(dataset) == 0:
        raise DataError("cannot split an empty dataset")
    if not (0 <= test_frac and 0 <= val_frac and test_frac + val_frac < 1):
        raise ValueError(f"invalid split fractions test={test_frac} val={val_frac}")

    train, val, test = [], [], []
    for c in range(dataset.n_classes):
        idx = np.flatnonzero(dataset.labels == c)
        n = len(idx)
        if n == 0:
            continue
        idx = idx[philox_rng(seed, _STREAM_SPLIT, c).permutation(n)]
        n_test = _round_half_up(test_frac * n)
        n_val = min(_round_half_up(val_frac * n), n - n_test)
        test.append(idx[:n_test])
        val.append(idx[n_test : n_test + n_val])
        train.append(idx[n_test + n_val :])

    cat = lambda parts: np.concatenate(parts).astype(np.int64) if parts else np.zeros(0, np.int64)  # noqa: E731
    return DatasetSplit(dataset, cat(train), cat(val), cat(test), seed, (float(test_frac), float(val_frac)))


_CACHE_ROW = lambda n_features: np.dtype([("x", "<f4", (n_features,)), ("y", "u1")])  # noqa: E731


def write_cache(dataset: Dataset, path: str | Path) -> None:
    """Binary dump: ``NBIO1`` | u32 header length | JSON header | packed rows.

    Each row is ``n_features`` little-endian float32 values followed by a label byte.
    """
    if dataset.n_classes > 256:
        raise ValueError("cache format stores labels in one byte")
    header = json.dumps(
        {"n_rows": len(dataset), "n_features": dataset.n_features, "class_names": list(dataset.class_names)}
    ).encode()
    rows = np.empty(len(dataset), dtype=_CACHE_ROW(dataset.n_features))
    rows["x"] = dataset.features
    rows["y"] = dataset.labels
    with Path(path).open("wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(rows.tobytes())


def read_cache(path: str | Path) -> Dataset:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:5] != CACHE_MAGIC:
        raise DataError(f"{path}: not a dataset cache (bad magic)")
    if len(blob) < 9:
        raise DataError(f"{path}: truncated cache header")
    (header_len,) = struct.unpack_from("<I", blob, 5)
    try:
        header = json.loads(blob[9 : 9 + header_len])
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: corrupt cache header: {exc}") from None
    dtype = _CACHE_ROW(header["n_features"])
    body = blob[9 + header_len :]
    if len(body) != header["n_rows"] * dtype.itemsize:
        raise DataError(f"{path}: expected {header['n_rows']} rows, cache body has {len(body)} bytes")
    rows = np.frombuffer(body, dtype=dtype)
    return Dataset(rows["x"].astype(np.float64), rows["y"].astype(np.int64), tuple(header["class_names"]))
