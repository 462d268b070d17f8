"""Datasets, CSV ingestion, and reproducible train/test splitting.

CSV files must be UTF-8 with a header row and purely numeric cells
(``.`` decimal separator, no missing values). Exported files use 17
significant digits so a write/read round trip is bit exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyFile,
    MissingResponseColumn,
    ParseError,
    SchemaMismatch,
    TooFewRows,
)
from .linalg import RngState


@dataclass(frozen=True)
class Dataset:
    """Numeric observations with named feature columns and a response."""

    features: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    response_name: str

    def __post_init__(self):
        if self.features.ndim != 2:
            raise DimensionMismatch("features must be 2-D")
        if self.y.ndim != 1 or self.y.size != self.features.shape[0]:
            raise DimensionMismatch("response length must match feature rows")
        if len(self.feature_names) != self.features.shape[1]:
            raise DimensionMismatch("one name per feature column required")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise SchemaMismatch("duplicate feature names")
        if self.response_name in self.feature_names:
            raise SchemaMismatch("response name collides with a feature name")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.features[:, self.feature_names.index(name)]

    def drop_features(self, names) -> "Dataset":
        """Dataset without the given feature columns (order preserved)."""
        drop = set(names)
        unknown = drop - set(self.feature_names)
        if unknown:
            raise SchemaMismatch(f"unknown feature names: {sorted(unknown)}")
        keep = [i for i, name in enumerate(self.feature_names) if name not in drop]
        return Dataset(
            features=self.features[:, keep],
            y=self.y,
            feature_names=tuple(self.feature_names[i] for i in keep),
            response_name=self.response_name,
        )

    def take_rows(self, idx) -> "Dataset":
        return Dataset(
            features=self.features[idx],
            y=self.y[idx],
            feature_names=self.feature_names,
            response_name=self.response_name,
        )


@dataclass(frozen=True)
class SplitSample:
    """A train/test pair sharing one column schema."""

    train: Dataset
    test: Dataset

    def __post_init__(self):
        if (
            self.train.feature_names != self.test.feature_names
            or self.train.response_name != self.test.response_name
        ):
            raise SchemaMismatch("train and test schemas differ")

    @property
    def n1(self) -> int:
        return self.train.n

    @property
    def n2(self) -> int:
        return self.test.n


def ingest_csv(path, response: str) -> Dataset:
    """Read a numeric CSV with a header row into a :class:`Dataset`.

    Raises :class:`ParseError` with 1-based row/col coordinates for any
    cell that is not a finite number, :class:`MissingResponseColumn` if
    the header lacks ``response``, and :class:`EmptyFile` for a file
    without header or data rows.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        rows = [row for row in reader if row]
    if not rows:
        raise EmptyFile(f"{path} has no header row")
    header = [name.strip() for name in rows[0]]
    if response not in header:
        raise MissingResponseColumn(f"column {response!r} not found in {header}")
    if len(rows) == 1:
        raise EmptyFile(f"{path} has a header but no data rows")

    width = len(header)
    data = np.empty((len(rows) - 1, width))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise ParseError(
                f"row {i} has {len(row)} cells, expected {width}", row=i, col=None
            )
        for j, cell in enumerate(row):
            try:
                value = float(cell)
            except ValueError:
                value = math.nan
            if not math.isfinite(value):
                raise ParseError(
                    f"cell {cell!r} at row {i}, column {j + 1} is not a finite number",
                    row=i,
                    col=j + 1,
                )
            data[i - 2, j] = value

    resp_idx = header.index(response)
    keep = [j for j in range(width) if j != resp_idx]
    return Dataset(
        features=data[:, keep],
        y=data[:, resp_idx],
        feature_names=tuple(header[j] for j in keep),
        response_name=response,
    )


def write_csv(dataset: Dataset, path) -> None:
    """Write a dataset back to CSV with round-trip-exact decimal formatting."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(list(dataset.feature_names) + [dataset.response_name])
        for i in range(dataset.n):
            cells = [format(v, ".17g") for v in dataset.features[i]]
            cells.append(format(dataset.y[i], ".17g"))
            writer.writerow(cells)


def split(dataset: Dataset, fraction: float, seed: int) -> SplitSample:
    """Seeded uniform shuffle followed by a fraction split.

    The first ``round(n * fraction)`` shuffled rows form the training
    set; each part must keep at least p + 2 rows.
    """
    if not 0.0 < fraction < 1.0:
        raise TooFewRows(f"split fraction must lie in (0, 1), got {fraction}")
    n = dataset.n
    n_train = round(n * fraction)
    n_test = n - n_train
    minimum = dataset.p + 2
    if n_train < minimum or n_test < minimum:
        raise TooFewRows(
            f"split {n_train}/{n_test} too small: both parts need at least {minimum} rows"
        )
    order = RngState(seed).child(0).generator.permutation(n)
    return SplitSample(
        train=dataset.take_rows(order[:n_train]),
        test=dataset.take_rows(order[n_train:]),
    )
