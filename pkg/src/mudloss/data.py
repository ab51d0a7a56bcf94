"""Tabular drilling datasets: schema, CSV ingest, dedup, scaling, splitting.

All operations are pure: they take a dataset (plus an explicit seed where
randomness is involved) and return a new dataset, so concurrent use on
distinct inputs is safe.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError

ROLE_FEATURE = "feature"
ROLE_TARGET = "target"


@dataclass(frozen=True)
class ColumnSchema:
    """One column of the input table: display name, short symbol, unit, role."""

    name: str
    symbol: str
    unit: str
    role: str

    def __post_init__(self):
        if self.role not in (ROLE_FEATURE, ROLE_TARGET):
            raise DataError(f"column {self.name!r}: unknown role {self.role!r}")


#: Built-in 19-column drilling schema (18 features X1..X18 plus target Y).
DEFAULT_SCHEMA: tuple[ColumnSchema, ...] = (
    ColumnSchema("Northing", "X1", "m", ROLE_FEATURE),
    ColumnSchema("Easting", "X2", "m", ROLE_FEATURE),
    ColumnSchema("Depth", "X3", "m", ROLE_FEATURE),
    ColumnSchema("Meterage", "X4", "m", ROLE_FEATURE),
    ColumnSchema("Drilling time", "X5", "hr", ROLE_FEATURE),
    ColumnSchema("Formation type", "X6", "-", ROLE_FEATURE),
    ColumnSchema("Hole size", "X7", "in", ROLE_FEATURE),
    ColumnSchema("Weight on bit", "X8", "1000 lb", ROLE_FEATURE),
    ColumnSchema("Flow rate", "X9", "gpm", ROLE_FEATURE),
    ColumnSchema("Mud weight", "X10", "pcf", ROLE_FEATURE),
    ColumnSchema("Marsh funnel viscosity", "X11", "-", ROLE_FEATURE),
    ColumnSchema("Retort solid", "X12", "%", ROLE_FEATURE),
    ColumnSchema("Pore pressure", "X13", "psi", ROLE_FEATURE),
    ColumnSchema("Fracture pressure", "X14", "psi", ROLE_FEATURE),
    ColumnSchema("FAN600/FAN300", "X15", "-", ROLE_FEATURE),
    ColumnSchema("Gel10min/Gel10s", "X16", "-", ROLE_FEATURE),
    ColumnSchema("Pump pressure", "X17", "psi", ROLE_FEATURE),
    ColumnSchema("Bit rotational speed", "X18", "rpm", ROLE_FEATURE),
    ColumnSchema("Mud-loss severity", "Y", "bbl/hr", ROLE_TARGET),
)


def validate_schema(columns) -> tuple[ColumnSchema, ...]:
    """Check schema invariants: exactly one target, unique names and symbols."""
    cols = tuple(columns)
    if not cols:
        raise DataError("schema has no columns")
    targets = [c for c in cols if c.role == ROLE_TARGET]
    if len(targets) != 1:
        raise DataError(f"schema must have exactly one target column, found {len(targets)}")
    names = [c.name for c in cols]
    if len(set(names)) != len(names):
        raise DataError("schema column names are not unique")
    symbols = [c.symbol for c in cols]
    if len(set(symbols)) != len(symbols):
        raise DataError("schema column symbols are not unique")
    return cols


def load_schema(path) -> tuple[ColumnSchema, ...]:
    """Load a column schema from a JSON list of {name, symbol, unit, role}."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, list):
        raise DataError(f"schema file {path}: expected a JSON list of columns")
    cols = []
    for i, entry in enumerate(doc):
        try:
            cols.append(ColumnSchema(entry["name"], entry["symbol"], entry["unit"], entry["role"]))
        except (KeyError, TypeError) as exc:
            raise DataError(f"schema file {path}: entry {i} is malformed ({exc})") from exc
    return validate_schema(cols)


def schema_to_doc(schema) -> list[dict]:
    return [
        {"name": c.name, "symbol": c.symbol, "unit": c.unit, "role": c.role} for c in schema
    ]


@dataclass(frozen=True)
class Dataset:
    """Feature matrix, target vector and the schema that names their columns."""

    features: np.ndarray
    target: np.ndarray
    schema: tuple[ColumnSchema, ...]

    def __post_init__(self):
        schema = validate_schema(self.schema)
        object.__setattr__(self, "schema", schema)
        feats = np.ascontiguousarray(self.features, dtype=float)
        targ = np.ascontiguousarray(self.target, dtype=float)
        if feats.ndim != 2:
            raise DataError(f"feature matrix must be 2-D, got shape {feats.shape}")
        if targ.ndim != 1 or targ.shape[0] != feats.shape[0]:
            raise DataError(
                f"target length {targ.shape} does not match {feats.shape[0]} feature rows"
            )
        n_feature_cols = sum(1 for c in schema if c.role == ROLE_FEATURE)
        if feats.shape[1] != n_feature_cols:
            raise DataError(
                f"feature matrix has {feats.shape[1]} columns but schema lists {n_feature_cols}"
            )
        if not np.all(np.isfinite(feats)) or not np.all(np.isfinite(targ)):
            raise DataError("dataset contains non-finite values")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "target", targ)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def feature_columns(self) -> tuple[ColumnSchema, ...]:
        return tuple(c for c in self.schema if c.role == ROLE_FEATURE)

    @property
    def target_column(self) -> ColumnSchema:
        return next(c for c in self.schema if c.role == ROLE_TARGET)

    def take(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(self.features[idx], self.target[idx], self.schema)

    def select_features(self, feature_indices) -> "Dataset":
        """Keep only the given feature columns (indices into feature order)."""
        idx = list(feature_indices)
        feature_cols = self.feature_columns
        kept = tuple(feature_cols[j] for j in idx) + (self.target_column,)
        return Dataset(self.features[:, idx], self.target, kept)


def load_dataset(path, schema=None) -> Dataset:
    """Load a CSV with a header row into a Dataset, columns reordered to schema order.

    The header must contain exactly the schema's column names (any order).
    Cells must parse as finite floats; errors name the offending row and column.
    """
    schema = validate_schema(schema if schema is not None else DEFAULT_SCHEMA)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        wanted = [c.name for c in schema]
        missing = [name for name in wanted if name not in header]
        if missing:
            raise DataError(f"{path}: missing column {missing[0]!r}")
        extra = [name for name in header if name not in wanted]
        if extra:
            raise DataError(f"{path}: unexpected column {extra[0]!r}")
        order = [header.index(name) for name in wanted]

        rows = []
        for row_no, row in enumerate(reader, start=2):
            if not row or all(cell.strip() == "" for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {row_no} has {len(row)} cells, expected {len(header)}"
                )
            values = np.empty(len(wanted))
            for out_col, src_col in enumerate(order):
                cell = row[src_col].strip()
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {row_no}, column {wanted[out_col]!r}: "
                        f"unparsable numeric cell {cell!r}"
                    ) from None
                if not math.isfinite(value):
                    raise DataError(
                        f"{path}: row {row_no}, column {wanted[out_col]!r}: "
                        f"non-finite value {cell!r}"
                    )
                values[out_col] = value
            rows.append(values)

    if not rows:
        raise DataError(f"{path}: no data rows")
    table = np.vstack(rows)
    feature_idx = [i for i, c in enumerate(schema) if c.role == ROLE_FEATURE]
    target_idx = next(i for i, c in enumerate(schema) if c.role == ROLE_TARGET)
    return Dataset(table[:, feature_idx], table[:, target_idx], schema)


def save_dataset(ds: Dataset, path) -> None:
    """Write a Dataset back to CSV in schema order with full float precision."""
    header = [c.name for c in ds.schema]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(ds.n):
            row = []
            feat_it = iter(ds.features[i])
            for col in ds.schema:
                if col.role == ROLE_TARGET:
                    row.append(repr(float(ds.target[i])))
                else:
                    row.append(repr(float(next(feat_it))))
            writer.writerow(row)


def deduplicate(ds: Dataset) -> Dataset:
    """Drop rows identical in every feature and the target, keeping first occurrences.

    Equality is exact bitwise equality; relative row order is preserved.
    """
    seen = set()
    keep = []
    for i in range(ds.n):
        key = ds.features[i].tobytes() + ds.target[i].tobytes()
        if key not in seen:
            seen.add(key)
            keep.append(i)
    if len(keep) == ds.n:
        return ds
    return ds.take(keep)


@dataclass(frozen=True)
class ScalingParams:
    """Per-column z-score parameters fitted on one dataset and reusable on others."""

    feature_means: np.ndarray
    feature_stds: np.ndarray
    target_mean: float
    target_std: float

    def __post_init__(self):
        means = np.asarray(self.feature_means, dtype=float)
        stds = np.asarray(self.feature_stds, dtype=float)
        if np.any(stds <= 0) or self.target_std <= 0:
            raise DataError("all stored standard deviations must be > 0")
        object.__setattr__(self, "feature_means", means)
        object.__setattr__(self, "feature_stds", stds)

    def transform(self, ds: Dataset) -> Dataset:
        feats = (ds.features - self.feature_means) / self.feature_stds
        targ = (ds.target - self.target_mean) / self.target_std
        return Dataset(feats, targ, ds.schema)

    def invert(self, ds: Dataset) -> Dataset:
        feats = ds.features * self.feature_stds + self.feature_means
        targ = ds.target * self.target_std + self.target_mean
        return Dataset(feats, targ, ds.schema)

    def transform_features(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.feature_means) / self.feature_stds

    def invert_target(self, y: np.ndarray | float):
        return np.asarray(y, dtype=float) * self.target_std + self.target_mean

    def invert_target_scale(self, spread: np.ndarray | float):
        """Convert a target-space half-width or std from standardized to raw units."""
        return np.asarray(spread, dtype=float) * self.target_std

    def subset(self, feature_indices) -> "ScalingParams":
        idx = list(feature_indices)
        return ScalingParams(
            self.feature_means[idx], self.feature_stds[idx], self.target_mean, self.target_std
        )

    def to_doc(self) -> dict:
        return {
            "feature_means": [float(v) for v in self.feature_means],
            "feature_stds": [float(v) for v in self.feature_stds],
            "target_mean": float(self.target_mean),
            "target_std": float(self.target_std),
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "ScalingParams":
        return cls(
            np.asarray(doc["feature_means"], dtype=float),
            np.asarray(doc["feature_stds"], dtype=float),
            float(doc["target_mean"]),
            float(doc["target_std"]),
        )


def standardize(ds: Dataset) -> tuple[Dataset, ScalingParams]:
    """Z-score every feature and the target (sample std, n-1 denominator).

    Raises on constant columns, naming the first offender, since a zero std
    cannot be inverted.
    """
    if ds.n < 2:
        raise DataError("standardize needs at least 2 rows")
    means = ds.features.mean(axis=0)
    stds = ds.features.std(axis=0, ddof=1)
    names = [c.name for c in ds.feature_columns]
    for j, s in enumerate(stds):
        if s <= 0:
            raise DataError(f"constant column {names[j]!r}: standard deviation is zero")
    t_mean = float(ds.target.mean())
    t_std = float(ds.target.std(ddof=1))
    if t_std <= 0:
        raise DataError(f"constant column {ds.target_column.name!r}: standard deviation is zero")
    params = ScalingParams(means, stds, t_mean, t_std)
    return params.transform(ds), params


@dataclass(frozen=True)
class SplitSpec:
    """Deterministic stratified train/test split settings."""

    train_fraction: float = 0.8
    seed: int = 42
    bins: int = 10

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise DataError(f"train fraction must be in (0, 1), got {self.train_fraction}")
        if self.bins < 1:
            raise DataError(f"stratification bin count must be >= 1, got {self.bins}")


def split_indices(ds: Dataset, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Stratified split indices: disjoint, covering all rows, reproducible by seed.

    Rows are binned by target quantiles; each bin contributes a train count
    within one sample of ``train_fraction * bin_size`` (largest-remainder
    allocation of the exact global train count).
    """
    n = ds.n
    if n < spec.bins:
        raise DataError(f"dataset of {n} rows is too small for {spec.bins} stratification bins")
    n_train = int(round(spec.train_fraction * n))
    if n_train <= 0 or n_train >= n:
        raise DataError(
            f"split of {n} rows at fraction {spec.train_fraction} leaves an empty set"
        )

    if spec.bins == 1:
        bin_of = np.zeros(n, dtype=int)
    else:
        qs = np.quantile(ds.target, [k / spec.bins for k in range(1, spec.bins)])
        bin_of = np.searchsorted(qs, ds.target, side="left")

    rng = np.random.default_rng(spec.seed)
    tie_break = rng.random(spec.bins)

    sizes = np.bincount(bin_of, minlength=spec.bins)
    quotas = spec.train_fraction * sizes
    base = np.floor(quotas).astype(int)
    leftover = n_train - int(base.sum())
    remainders = quotas - base
    # hand out the leftover train slots to the largest remainders; random,
    # seed-fixed tie-break so equal remainders do not bias high target bins
    order = sorted(range(spec.bins), key=lambda b: (-remainders[b], tie_break[b]))
    counts = base.copy()
    for b in order:
        if leftover == 0:
            break
        if counts[b] < sizes[b]:
            counts[b] += 1
            leftover -= 1
    if leftover:  # some bins were full; give slots to any bin with room
        for b in order:
            while leftover and counts[b] < sizes[b]:
                counts[b] += 1
                leftover -= 1

    train_mask = np.zeros(n, dtype=bool)
    for b in range(spec.bins):
        members = np.flatnonzero(bin_of == b)
        if members.size == 0:
            continue
        picked = rng.permutation(members.size)[: counts[b]]
        train_mask[members[picked]] = True

    train_idx = np.flatnonzero(train_mask)
    test_idx = np.flatnonzero(~train_mask)
    return train_idx, test_idx


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Split a dataset into train and test parts per ``split_indices``."""
    train_idx, test_idx = split_indices(ds, spec)
    return ds.take(train_idx), ds.take(test_idx)
