"""Dataset container, file loaders and feature preprocessing.

Matrices are stored features x samples (``d x n``), so a sample is a column.
Class labels never live on a :class:`DataMatrix`; loaders hand them back
separately and only the evaluation code consumes them.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    DataError,
    DimensionMismatchError,
    NonNumericCellError,
    ParseError,
    ZeroVarianceError,
)

__all__ = [
    "DataMatrix",
    "Preprocessing",
    "load_dataset",
    "load_csv",
    "load_libsvm",
    "preprocess",
]

MIN_FEATURES = 2
MIN_SAMPLES = 3


@dataclass(frozen=True)
class DataMatrix:
    """Real ``d x n`` matrix with one named row per feature.

    Parameters
    ----------
    values : array-like, shape (n_features, n_samples)
    feature_names : sequence of str, optional
        Defaults to ``f0, f1, ...``.
    """

    values: np.ndarray
    feature_names: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2:
            raise DimensionMismatchError(f"expected a 2-D matrix, got {values.ndim}-D")
        d, n = values.shape
        if d < MIN_FEATURES or n < MIN_SAMPLES:
            raise DimensionMismatchError(
                f"need at least {MIN_FEATURES} features and {MIN_SAMPLES} samples, got d={d}, n={n}"
            )
        if not np.all(np.isfinite(values)):
            raise DataError("matrix contains NaN or Inf entries")
        names = tuple(self.feature_names) if len(self.feature_names) else tuple(f"f{j}" for j in range(d))
        if len(names) != d:
            raise DimensionMismatchError(f"{len(names)} feature names for {d} features")
        if len(set(names)) != d:
            raise DataError("feature names must be unique")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "feature_names", names)

    @property
    def n_features(self) -> int:
        return self.values.shape[0]

    @property
    def n_samples(self) -> int:
        return self.values.shape[1]

    def select(self, indices: Sequence[int]) -> "DataMatrix":
        """Sub-matrix restricted to the given feature rows (in that order)."""
        idx = list(indices)
        return DataMatrix(self.values[idx], tuple(self.feature_names[i] for i in idx))


class Preprocessing(str, enum.Enum):
    NONE = "none"
    CENTER = "center"
    ZSCORE = "zscore"


def preprocess(x: DataMatrix, kind: Union[Preprocessing, str] = Preprocessing.ZSCORE) -> DataMatrix:
    """Center or standardize every feature row.

    ``zscore`` uses the population (1/n) standard deviation and refuses
    constant features instead of silently dividing by zero.
    """
    kind = Preprocessing(kind)
    if kind is Preprocessing.NONE:
        return x
    v = x.values
    centered = v - v.mean(axis=1, keepdims=True)
    if kind is Preprocessing.CENTER:
        return DataMatrix(centered, x.feature_names)
    std = np.sqrt(np.mean(centered ** 2, axis=1))
    scale = np.maximum(np.abs(v).max(axis=1), 1.0)
    const = np.flatnonzero(std <= 1e-12 * scale)
    if const.size:
        names = ", ".join(x.feature_names[j] for j in const[:5])
        raise ZeroVarianceError(f"zero-variance feature(s) under zscore: {names}")
    return DataMatrix(centered / std[:, None], x.feature_names)


def _to_float(cell: str, row: int, col: int) -> float:
    try:
        return float(cell)
    except ValueError:
        raise NonNumericCellError(f"non-numeric cell {cell!r} at row {row}, column {col}") from None


def _resolve_label_index(label: Union[int, str, None], header: Optional[list]) -> Optional[int]:
    if label is None:
        return None
    if isinstance(label, int) or (isinstance(label, str) and label.lstrip("-").isdigit()):
        return int(label)
    if header is None:
        raise DataError(f"label column {label!r} given by name but the file has no header")
    try:
        return header.index(label)
    except ValueError:
        raise DataError(f"label column {label!r} not found in header") from None


def _parse_labels(raw: Sequence[str]) -> np.ndarray:
    """Integer-code arbitrary label strings in order of first appearance."""
    try:
        numeric = np.array([float(v) for v in raw])
        if np.all(numeric == np.round(numeric)):
            return numeric.astype(np.int64)
    except ValueError:
        pass
    codes = {}
    return np.array([codes.setdefault(v, len(codes)) for v in raw], dtype=np.int64)


def load_csv(
    path: Union[str, Path],
    orientation: str = "samples-as-rows",
    header: bool = False,
    label: Union[int, str, None] = None,
) -> Tuple[DataMatrix, Optional[np.ndarray]]:
    """Read a comma-separated numeric table.

    With ``samples-as-rows`` the optional header names the features and
    ``label`` selects a column (by index or header name). With
    ``features-as-rows`` ``label`` selects a row by index and the header, if
    any, is ignored.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError(f"{path}: empty file")
    names = None
    if header:
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise ParseError(f"{path}: row {i + 1} has {len(r)} cells, expected {width}")
    if names is not None and len(names) != width:
        raise DimensionMismatchError(f"{path}: header has {len(names)} names for {width} columns")

    labels = None
    if orientation == "samples-as-rows":
        li = _resolve_label_index(label, names)
        if li is not None:
            li %= width
            labels = _parse_labels([r[li].strip() for r in rows])
            rows = [r[:li] + r[li + 1:] for r in rows]
            if names is not None:
                names = names[:li] + names[li + 1:]
        table = np.array([[_to_float(c, i, j) for j, c in enumerate(r)] for i, r in enumerate(rows)])
        values = table.T
    elif orientation == "features-as-rows":
        names = None
        li = _resolve_label_index(label, None)
        if li is not None:
            li %= len(rows)
            labels = _parse_labels([c.strip() for c in rows[li]])
            rows = rows[:li] + rows[li + 1:]
        values = np.array([[_to_float(c, i, j) for j, c in enumerate(r)] for i, r in enumerate(rows)])
    else:
        raise DataError(f"unknown orientation {orientation!r}")
    return DataMatrix(values, tuple(names) if names else ()), labels


def load_libsvm(path: Union[str, Path], n_features: Optional[int] = None) -> Tuple[DataMatrix, np.ndarray]:
    """Read ``label idx:val ...`` lines with 1-based indices; absent entries are 0."""
    path = Path(path)
    raw_labels, entries = [], []
    max_idx = 0
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            raw_labels.append(tokens[0])
            row = {}
            for tok in tokens[1:]:
                idx, sep, val = tok.partition(":")
                if not sep:
                    raise ParseError(f"{path}:{lineno}: malformed token {tok!r}")
                try:
                    j = int(idx)
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: bad index {idx!r}") from None
                if j < 1:
                    raise ParseError(f"{path}:{lineno}: indices are 1-based, got {j}")
                row[j - 1] = _to_float(val, lineno, j)
                max_idx = max(max_idx, j)
            entries.append(row)
    if not entries:
        raise ParseError(f"{path}: no samples")
    d = max_idx if n_features is None else n_features
    if d < max_idx:
        raise DimensionMismatchError(f"{path}: index {max_idx} exceeds n_features={d}")
    values = np.zeros((d, len(entries)))
    for i, row in enumerate(entries):
        for j, v in row.items():
            values[j, i] = v
    return DataMatrix(values), _parse_labels(raw_labels)


def load_dataset(
    path: Union[str, Path],
    format: str = "csv",
    orientation: str = "samples-as-rows",
    header: bool = False,
    label: Union[int, str, None] = None,
) -> Tuple[DataMatrix, Optional[np.ndarray]]:
    """Load a dataset; returns ``(matrix, labels)`` with ``labels`` possibly ``None``."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    if format == "csv":
        return load_csv(path, orientation=orientation, header=header, label=label)
    if format == "libsvm":
        return load_libsvm(path)
    raise DataError(f"unknown format {format!r}")
