"""Portable dataset format, loading and validation, prototype
normalization, and a seeded synthetic generator for desk-scale tests.

On-disk layout of a dataset directory:
  features.f32bin    magic "IGSCMAT1", u32 LE rows, u32 LE cols, f32 LE row-major
  prototypes.f32bin  same matrix format
  labels.u32bin      magic "IGSCLBL1", u32 LE count, u32 LE class ids
  splits.json        integer arrays train_idx, val_idx, test_seen_idx,
                     test_unseen_idx, seen_classes, unseen_classes

Stored values are 32-bit; everything is widened to float64 in memory.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError

MATRIX_MAGIC = b"IGSCMAT1"
LABELS_MAGIC = b"IGSCLBL1"

FEATURES_FILE = "features.f32bin"
LABELS_FILE = "labels.u32bin"
PROTOTYPES_FILE = "prototypes.f32bin"
SPLITS_FILE = "splits.json"

SPLIT_KEYS = ("train_idx", "val_idx", "test_seen_idx", "test_unseen_idx")
CLASS_KEYS = ("seen_classes", "unseen_classes")


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def write_matrix(path, array) -> None:
    """Write a 2-D float32 matrix in the IGSCMAT1 layout."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    if arr.ndim != 2:
        raise ValidationError(f"matrix file needs a 2-D array, got shape {arr.shape}")
    rows, cols = arr.shape
    header = MATRIX_MAGIC + struct.pack("<II", rows, cols)
    _atomic_write(Path(path), header + arr.tobytes())


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"missing file: {path}")
    blob = path.read_bytes()
    if len(blob) < 16 or blob[:8] != MATRIX_MAGIC:
        raise FormatError(f"{path}: bad magic, expected {MATRIX_MAGIC!r}")
    rows, cols = struct.unpack("<II", blob[8:16])
    expected = 16 + 4 * rows * cols
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for {rows}x{cols}, got {len(blob)}")
    return np.frombuffer(blob, dtype="<f4", offset=16).reshape(rows, cols)


def write_labels(path, labels) -> None:
    """Write a class-id vector in the IGSCLBL1 layout."""
    ids = np.ascontiguousarray(labels, dtype="<u4")
    if ids.ndim != 1:
        raise ValidationError(f"label file needs a 1-D array, got shape {ids.shape}")
    header = LABELS_MAGIC + struct.pack("<I", ids.shape[0])
    _atomic_write(Path(path), header + ids.tobytes())


def read_labels(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"missing file: {path}")
    blob = path.read_bytes()
    if len(blob) < 12 or blob[:8] != LABELS_MAGIC:
        raise FormatError(f"{path}: bad magic, expected {LABELS_MAGIC!r}")
    (count,) = struct.unpack("<I", blob[8:12])
    if len(blob) != 12 + 4 * count:
        raise FormatError(f"{path}: expected {12 + 4 * count} bytes for {count} labels, got {len(blob)}")
    return np.frombuffer(blob, dtype="<u4", offset=12).astype(np.int64)


@dataclass
class SplitSet:
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_seen_idx: np.ndarray
    test_unseen_idx: np.ndarray

    def as_dict(self) -> dict[str, list[int]]:
        return {k: [int(i) for i in getattr(self, k)] for k in SPLIT_KEYS}


@dataclass
class Dataset:
    """Embedding dataset: per-image features, labels, class prototypes,
    split indices, and the seen/unseen class lists.

    `prototypes` is the L2-row-normalized working copy; `raw_prototypes`
    preserves the stored float32 values so write -> load round-trips
    bit-exactly. Immutable by convention after load.
    """

    features: np.ndarray  # (N, v) float64
    labels: np.ndarray  # (N,) int64
    prototypes: np.ndarray  # (C, d) float64, unit rows
    raw_prototypes: np.ndarray  # (C, d) float32 as stored
    splits: SplitSet
    seen_classes: np.ndarray  # int64
    unseen_classes: np.ndarray  # int64

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return self.prototypes.shape[0]

    @property
    def prototype_dim(self) -> int:
        return self.prototypes.shape[1]


def l2_normalize_prototypes(prototypes) -> np.ndarray:
    """Scale every prototype row to unit Euclidean norm."""
    p = np.asarray(prototypes, dtype=np.float64)
    norms = np.linalg.norm(p, axis=1)
    zero = np.nonzero(norms == 0.0)[0]
    if zero.size:
        raise ValidationError(f"prototype row for class {int(zero[0])} has zero norm")
    return p / norms[:, None]


def _as_index_array(values, key: str) -> np.ndarray:
    if not isinstance(values, list) or any(isinstance(v, bool) or not isinstance(v, int) for v in values):
        raise FormatError(f"splits.json: {key} must be an array of integers")
    return np.asarray(values, dtype=np.int64)


def _check_indices(idx: np.ndarray, n: int, key: str) -> None:
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ValidationError(f"{key}: index {int(idx[(idx < 0) | (idx >= n)][0])} out of range [0, {n})")
    if np.unique(idx).size != idx.size:
        raise ValidationError(f"{key}: duplicate indices")


def build_dataset(features_f32, labels, raw_prototypes_f32, splits: SplitSet,
                  seen_classes, unseen_classes) -> Dataset:
    """Validate raw arrays and assemble a Dataset (shared by the loader
    and the synthetic generator). Any invariant violation raises."""
    features_f32 = np.asarray(features_f32, dtype=np.float32)
    raw_prototypes_f32 = np.asarray(raw_prototypes_f32, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    seen = np.asarray(seen_classes, dtype=np.int64)
    unseen = np.asarray(unseen_classes, dtype=np.int64)

    if features_f32.ndim != 2:
        raise ValidationError(f"features must be 2-D, got shape {features_f32.shape}")
    if raw_prototypes_f32.ndim != 2 or raw_prototypes_f32.shape[1] < 1:
        raise ValidationError(f"prototypes must be 2-D with d >= 1, got shape {raw_prototypes_f32.shape}")
    n = features_f32.shape[0]
    c = raw_prototypes_f32.shape[0]
    if labels.shape != (n,):
        raise ValidationError(f"labels: length {labels.shape[0]} != feature rows {n}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        bad = labels[(labels < 0) | (labels >= c)][0]
        raise ValidationError(f"labels: class id {int(bad)} out of range [0, {c})")

    for key in SPLIT_KEYS:
        _check_indices(getattr(splits, key), n, key)
    overlap = np.intersect1d(splits.train_idx, splits.test_seen_idx)
    if overlap.size:
        raise ValidationError(f"train_idx and test_seen_idx overlap at index {int(overlap[0])}")

    for name, ids in (("seen_classes", seen), ("unseen_classes", unseen)):
        if np.unique(ids).size != ids.size:
            raise ValidationError(f"{name}: duplicate class ids")
        if ids.size and (ids.min() < 0 or ids.max() >= c):
            raise ValidationError(f"{name}: class id out of range [0, {c})")
    both = np.intersect1d(seen, unseen)
    if both.size:
        raise ValidationError(f"seen_classes and unseen_classes intersect at class {int(both[0])}")

    memberships = (
        ("train_idx", splits.train_idx, seen, "seen_classes"),
        ("val_idx", splits.val_idx, seen, "seen_classes"),
        ("test_seen_idx", splits.test_seen_idx, seen, "seen_classes"),
        ("test_unseen_idx", splits.test_unseen_idx, unseen, "unseen_classes"),
    )
    for key, idx, allowed, allowed_name in memberships:
        if idx.size:
            outside = np.setdiff1d(labels[idx], allowed)
            if outside.size:
                raise ValidationError(f"{key}: sample with label {int(outside[0])} not in {allowed_name}")

    return Dataset(
        features=features_f32.astype(np.float64),
        labels=labels,
        prototypes=l2_normalize_prototypes(raw_prototypes_f32.astype(np.float64)),
        raw_prototypes=raw_prototypes_f32,
        splits=splits,
        seen_classes=seen,
        unseen_classes=unseen,
    )


def load_dataset(directory) -> Dataset:
    """Read and fully validate a dataset directory."""
    directory = Path(directory)
    features = read_matrix(directory / FEATURES_FILE)
    labels = read_labels(directory / LABELS_FILE)
    prototypes = read_matrix(directory / PROTOTYPES_FILE)

    splits_path = directory / SPLITS_FILE
    if not splits_path.is_file():
        raise FormatError(f"missing file: {splits_path}")
    try:
        raw = json.loads(splits_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{splits_path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise FormatError(f"{splits_path}: top level must be a JSON object")
    for key in SPLIT_KEYS + CLASS_KEYS:
        if key not in raw:
            raise FormatError(f"{splits_path}: missing key {key!r}")

    splits = SplitSet(*(_as_index_array(raw[k], k) for k in SPLIT_KEYS))
    seen = _as_index_array(raw["seen_classes"], "seen_classes")
    unseen = _as_index_array(raw["unseen_classes"], "unseen_classes")
    return build_dataset(features, labels, prototypes, splits, seen, unseen)


def save_dataset(directory, dataset: Dataset) -> None:
    """Write the four dataset files; float32 content round-trips bit-exactly."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_matrix(directory / FEATURES_FILE, dataset.features)
    write_labels(directory / LABELS_FILE, dataset.labels)
    write_matrix(directory / PROTOTYPES_FILE, dataset.raw_prototypes)
    payload = dict(dataset.splits.as_dict())
    payload["seen_classes"] = [int(c) for c in dataset.seen_classes]
    payload["unseen_classes"] = [int(c) for c in dataset.unseen_classes]
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    _atomic_write(directory / SPLITS_FILE, text.encode("utf-8"))


@dataclass
class SyntheticSpec:
    """Parameters of the planted synthetic benchmark."""

    seen_count: int
    unseen_count: int
    d: int
    v: int
    samples_per_class: int
    noise_sigma: float = 0.01
    seed: int = 0

    def __post_init__(self):
        for name in ("seen_count", "unseen_count", "d", "v", "samples_per_class"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.noise_sigma < 0:
            raise ValidationError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


def make_synthetic(spec: SyntheticSpec, return_mixing: bool = False):
    """Generate a planted dataset: unit prototypes, features that are a
    fixed random linear image of the class prototype plus gaussian noise.

    80% of each seen class goes to train, the rest to test_seen; every
    unseen-class sample goes to test_unseen. Deterministic in spec.seed.
    With return_mixing=True also returns the ground-truth mixing matrix
    (v x d) so tests can run an independent nearest-prototype oracle.
    """
    rng = np.random.default_rng(spec.seed)
    c = spec.seen_count + spec.unseen_count
    prototypes = l2_normalize_prototypes(rng.uniform(0.0, 1.0, size=(c, spec.d)))
    mixing = rng.standard_normal((spec.v, spec.d))

    spc = spec.samples_per_class
    features = np.empty((c * spc, spec.v))
    labels = np.empty(c * spc, dtype=np.int64)
    for cls in range(c):
        base = mixing @ prototypes[cls]
        block = slice(cls * spc, (cls + 1) * spc)
        features[block] = base + spec.noise_sigma * rng.standard_normal((spc, spec.v))
        labels[block] = cls

    n_train = max(1, int(round(0.8 * spc)))
    train_idx, test_seen_idx, test_unseen_idx = [], [], []
    for cls in range(c):
        idx = np.arange(cls * spc, (cls + 1) * spc)
        if cls < spec.seen_count:
            train_idx.append(idx[:n_train])
            test_seen_idx.append(idx[n_train:])
        else:
            test_unseen_idx.append(idx)
    splits = SplitSet(
        train_idx=np.concatenate(train_idx),
        val_idx=np.asarray([], dtype=np.int64),
        test_seen_idx=np.concatenate(test_seen_idx),
        test_unseen_idx=np.concatenate(test_unseen_idx),
    )

    dataset = build_dataset(
        features.astype(np.float32),
        labels,
        prototypes.astype(np.float32),
        splits,
        np.arange(spec.seen_count, dtype=np.int64),
        np.arange(spec.seen_count, c, dtype=np.int64),
    )
    if return_mixing:
        return dataset, mixing
    return dataset
