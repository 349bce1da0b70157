"""Archive conversion.

The source is two MAT files: one holding the per-image feature matrix and
the label vector, one holding the per-class attribute matrix and the
1-based index vectors for the train / val / test-seen / test-unseen
splits. The output is the four-file portable layout the igsc toolkit
loads: features.f32bin, labels.u32bin, prototypes.f32bin (both in the
IGSCMAT1/IGSCLBL1 binary formats), and splits.json.

Class ids are renumbered to a dense 0..C-1 range, indices are shifted to
0-based, and feature/attribute values are written as raw 32-bit floats.
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

FEATURE_ARRAYS = ("features", "labels")
SPLIT_ARRAYS = ("att", "train_loc", "val_loc", "test_seen_loc", "test_unseen_loc")

MATRIX_MAGIC = b"IGSCMAT1"
LABELS_MAGIC = b"IGSCLBL1"


class ConverterError(Exception):
    """Base class for conversion failures."""


class SchemaError(ConverterError):
    """A source archive is missing a required named array."""


class ValidationError(ConverterError):
    """Source arrays are inconsistent (bad index, shape, or class id)."""


def load_mat_arrays(path) -> dict[str, np.ndarray]:
    """Read the named arrays of a MAT file, any version.

    Pre-7.3 files go through scipy; 7.3 files are HDF5 and are read with
    h5py, transposing each dataset back from MATLAB's column-major layout.
    """
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"missing source file: {path}")
    try:
        from scipy.io import loadmat

        raw = loadmat(path)
        return {k: np.asarray(v) for k, v in raw.items() if not k.startswith("__")}
    except NotImplementedError:
        import h5py

        arrays: dict[str, np.ndarray] = {}
        with h5py.File(path, "r") as handle:
            for key, node in handle.items():
                if isinstance(node, h5py.Dataset):
                    arrays[key] = np.asarray(node).T
        return arrays
    except ValueError as exc:
        raise SchemaError(f"{path} is not a readable MAT file: {exc}") from exc


def _require(arrays: dict, names, source: Path):
    missing = [n for n in names if n not in arrays]
    if missing:
        raise SchemaError(
            f"{source}: missing array(s) {missing}; expected {list(names)}"
        )


def _as_vector(arr: np.ndarray, name: str) -> np.ndarray:
    squeezed = np.squeeze(np.asarray(arr))
    if squeezed.ndim == 0:
        squeezed = squeezed.reshape(1)
    if squeezed.ndim != 1:
        raise ValidationError(f"{name} must be a vector, got shape {arr.shape}")
    return squeezed


def _orient_features(features: np.ndarray, n_labels: int) -> np.ndarray:
    if features.ndim != 2:
        raise ValidationError(f"features must be 2-D, got shape {features.shape}")
    rows_match = features.shape[0] == n_labels
    cols_match = features.shape[1] == n_labels
    if rows_match and cols_match:
        raise ValidationError(
            f"features matrix is square ({features.shape}); orientation is ambiguous"
        )
    if rows_match:
        return features
    if cols_match:
        return features.T
    raise ValidationError(
        f"features shape {features.shape} does not match label count {n_labels} on either axis"
    )


def _index_vector(arr: np.ndarray, name: str, n: int) -> np.ndarray:
    idx = _as_vector(arr, name)
    if idx.size == 0:
        return np.asarray([], dtype=np.int64)
    if not np.all(idx == np.floor(idx)):
        raise ValidationError(f"{name} holds non-integer indices")
    idx = idx.astype(np.int64)
    if idx.min() < 1 or idx.max() > n:
        bad = idx[(idx < 1) | (idx > n)][0]
        raise ValidationError(f"{name}: 1-based index {int(bad)} out of range [1, {n}]")
    return idx - 1


def convert(features_path, splits_path, out_dir) -> dict:
    """Convert one archive pair; returns a summary of the written dataset."""
    features_path, splits_path = Path(features_path), Path(splits_path)
    feats_arrays = load_mat_arrays(features_path)
    split_arrays = load_mat_arrays(splits_path)
    _require(feats_arrays, FEATURE_ARRAYS, features_path)
    _require(split_arrays, SPLIT_ARRAYS, splits_path)

    labels_orig = _as_vector(feats_arrays["labels"], "labels")
    if not np.all(labels_orig == np.floor(labels_orig)):
        raise ValidationError("labels hold non-integer class ids")
    labels_orig = labels_orig.astype(np.int64)
    n = labels_orig.size
    features = _orient_features(np.asarray(feats_arrays["features"]), n)

    att = np.asarray(split_arrays["att"])
    if att.ndim != 2:
        raise ValidationError(f"att must be 2-D, got shape {att.shape}")
    max_orig = int(labels_orig.max())
    if att.shape[1] < max_orig and att.shape[0] >= max_orig:
        att = att.T  # classes were stored on the rows
    if att.shape[1] < max_orig:
        raise ValidationError(
            f"attribute matrix has {att.shape[1]} class columns but labels reference class {max_orig}"
        )
    if labels_orig.min() < 1:
        raise ValidationError(f"labels must be 1-based, found {int(labels_orig.min())}")

    # dense renumbering: sorted original ids -> 0..C-1
    orig_ids = np.unique(labels_orig)
    labels = np.searchsorted(orig_ids, labels_orig)
    prototypes = att[:, orig_ids - 1].T  # one row per renumbered class

    splits = {
        name: _index_vector(split_arrays[source], source, n)
        for name, source in (
            ("train_idx", "train_loc"),
            ("val_idx", "val_loc"),
            ("test_seen_idx", "test_seen_loc"),
            ("test_unseen_idx", "test_unseen_loc"),
        )
    }
    seen_samples = np.concatenate(
        [splits["train_idx"], splits["val_idx"], splits["test_seen_idx"]]
    )
    seen = np.unique(labels[seen_samples])
    unseen = np.unique(labels[splits["test_unseen_idx"]])
    overlap = np.intersect1d(seen, unseen)
    if overlap.size:
        raise ValidationError(
            f"class {int(orig_ids[overlap[0]])} appears in both seen and unseen splits"
        )

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_matrix(out_dir / "features.f32bin", features.astype(np.float32))
    _write_labels(out_dir / "labels.u32bin", labels)
    _write_matrix(out_dir / "prototypes.f32bin", prototypes.astype(np.float32))
    payload = {k: [int(i) for i in v] for k, v in splits.items()}
    payload["seen_classes"] = [int(c) for c in seen]
    payload["unseen_classes"] = [int(c) for c in unseen]
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    _atomic_write(out_dir / "splits.json", text.encode("utf-8"))

    return {
        "samples": int(n),
        "feature_dim": int(features.shape[1]),
        "classes": int(prototypes.shape[0]),
        "attribute_dim": int(prototypes.shape[1]),
        "train": int(splits["train_idx"].size),
        "val": int(splits["val_idx"].size),
        "test_seen": int(splits["test_seen_idx"].size),
        "test_unseen": int(splits["test_unseen_idx"].size),
    }


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def _write_matrix(path: Path, array: np.ndarray) -> None:
    arr = np.ascontiguousarray(array, dtype="<f4")
    header = MATRIX_MAGIC + struct.pack("<II", *arr.shape)
    _atomic_write(path, header + arr.tobytes())


def _write_labels(path: Path, labels: np.ndarray) -> None:
    ids = np.ascontiguousarray(labels, dtype="<u4")
    header = LABELS_MAGIC + struct.pack("<I", ids.shape[0])
    _atomic_write(path, header + ids.tobytes())
