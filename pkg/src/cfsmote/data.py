"""Tabular data model, the sigma class-boundary splitter and CSV ingestion.

A :class:`Dataset` is stored column-wise as numpy arrays (features ``X``,
targets ``y``, integer labels) because every downstream operation is a
vectorised distance or interpolation. :class:`Instance` is the row view.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import DataError

UNLABELED = -1

DEFAULT_CLIMATE_NAMES = ("rainfall", "temperature", "solar")
SEASON_COLUMN = "week"

# Columns that are never treated as features on ingestion.
RESERVED_COLUMNS = frozenset(
    {
        "id",
        "label",
        "slice",
        "synthetic",
        "generator",
        "source_id",
        "template_majority_id",
        "template_minority_id",
        "seed_id",
        "neighbor_id",
        "delta",
    }
)


class Label(enum.IntEnum):
    MAJORITY = 0
    MINORITY = 1

    @classmethod
    def parse(cls, text: str) -> "Label":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise DataError(f"unknown label {text!r}; expected 'majority' or 'minority'") from None

    def __str__(self) -> str:
        return self.name.lower()


class BoundaryMode(str, enum.Enum):
    GLOBAL = "global"
    SEASONAL = "seasonal"


@dataclass(frozen=True)
class FeatureSchema:
    feature_names: tuple[str, ...]
    climate_feature_indices: tuple[int, ...]
    seasonal_index: int | None = None
    target_name: str = "growth"

    def __post_init__(self):
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "climate_feature_indices", tuple(int(i) for i in self.climate_feature_indices))
        names = self.feature_names
        if len(set(names)) != len(names):
            raise DataError(f"feature names must be unique: {names}")
        if not self.climate_feature_indices:
            raise DataError("at least one climate feature is required")
        for i in self.climate_feature_indices:
            if not 0 <= i < len(names):
                raise DataError(f"climate feature index {i} out of range")
        if self.seasonal_index is not None and not 0 <= self.seasonal_index < len(names):
            raise DataError(f"seasonal index {self.seasonal_index} out of range")
        if self.target_name in names:
            raise DataError(f"target {self.target_name!r} clashes with a feature name")

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def climate_names(self) -> tuple[str, ...]:
        return tuple(self.feature_names[i] for i in self.climate_feature_indices)

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "climate_feature_indices": list(self.climate_feature_indices),
            "seasonal_index": self.seasonal_index,
            "target_name": self.target_name,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeatureSchema":
        return cls(
            feature_names=tuple(d["feature_names"]),
            climate_feature_indices=tuple(d["climate_feature_indices"]),
            seasonal_index=d.get("seasonal_index"),
            target_name=d.get("target_name", "growth"),
        )


@dataclass(frozen=True)
class Instance:
    id: str
    features: tuple[float, ...]
    target: float
    label: Label | None = None
    slice: str | None = None


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


class Dataset:
    """An immutable collection of instances sharing one :class:`FeatureSchema`.

    Parameters
    ----------
    schema : FeatureSchema
    X : array-like of shape (n, n_features)
    y : array-like of shape (n,)
        Continuous growth target.
    ids : sequence of str, optional
        Unique identifiers; defaults to ``"0", "1", ...``.
    labels : array-like of int, optional
        ``Label`` values, or ``UNLABELED`` (-1) per row.
    slices : sequence of str, optional
        Evaluation slice name per row (test data only).
    """

    def __init__(self, schema: FeatureSchema, X, y, ids=None, labels=None, slices=None):
        X = np.array(X, dtype=np.float64, copy=True)
        y = np.array(y, dtype=np.float64, copy=True).reshape(-1)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(0, schema.n_features)
        if X.ndim != 2 or X.shape[1] != schema.n_features:
            raise DataError(f"feature matrix shape {X.shape} does not match schema with {schema.n_features} features")
        n = X.shape[0]
        if y.shape[0] != n:
            raise DataError(f"{y.shape[0]} targets for {n} instances")
        if not np.all(np.isfinite(X)):
            bad = int(np.flatnonzero(~np.isfinite(X).all(axis=1))[0])
            raise DataError(f"non-finite feature value in instance {bad}")
        if not np.all(np.isfinite(y)):
            raise DataError(f"non-finite target in instance {int(np.flatnonzero(~np.isfinite(y))[0])}")
        if ids is None:
            ids = tuple(str(i) for i in range(n))
        else:
            ids = tuple(str(i) for i in ids)
            if len(ids) != n:
                raise DataError(f"{len(ids)} ids for {n} instances")
            if len(set(ids)) != n:
                raise DataError("instance ids must be unique")
        if labels is None:
            labels = np.full(n, UNLABELED, dtype=np.int8)
        else:
            labels = np.array(labels, dtype=np.int8).reshape(-1)
            if labels.shape[0] != n:
                raise DataError(f"{labels.shape[0]} labels for {n} instances")
            if not np.isin(labels, (UNLABELED, Label.MAJORITY, Label.MINORITY)).all():
                raise DataError("labels must be MAJORITY, MINORITY or unlabeled")
        if slices is not None:
            slices = tuple(str(s) for s in slices)
            if len(slices) != n:
                raise DataError(f"{len(slices)} slice names for {n} instances")
        self.schema = schema
        self._X = _frozen(X)
        self._y = _frozen(y)
        self._labels = _frozen(labels)
        self.ids = ids
        self.slices = slices

    X = property(lambda self: self._X)
    y = property(lambda self: self._y)
    labels = property(lambda self: self._labels)

    def __len__(self) -> int:
        return self._X.shape[0]

    def __getitem__(self, i: int) -> Instance:
        lab = int(self._labels[i])
        return Instance(
            id=self.ids[i],
            features=tuple(float(v) for v in self._X[i]),
            target=float(self._y[i]),
            label=None if lab == UNLABELED else Label(lab),
            slice=None if self.slices is None else self.slices[i],
        )

    def __iter__(self) -> Iterator[Instance]:
        return (self[i] for i in range(len(self)))

    def __repr__(self) -> str:
        return f"Dataset(n={len(self)}, features={list(self.schema.feature_names)})"

    @classmethod
    def from_instances(cls, schema: FeatureSchema, instances: Iterable[Instance]) -> "Dataset":
        rows = list(instances)
        for inst in rows:
            if len(inst.features) != schema.n_features:
                raise DataError(f"instance {inst.id!r} has {len(inst.features)} features, schema has {schema.n_features}")
        X = np.array([r.features for r in rows], dtype=np.float64).reshape(len(rows), schema.n_features)
        labels = [UNLABELED if r.label is None else int(r.label) for r in rows]
        slices = None
        if rows and all(r.slice is not None for r in rows):
            slices = [r.slice for r in rows]
        return cls(schema, X, [r.target for r in rows], ids=[r.id for r in rows], labels=labels, slices=slices)

    @property
    def is_labeled(self) -> bool:
        return bool(np.all(self._labels != UNLABELED))

    def require_labeled(self):
        if not self.is_labeled:
            n = int(np.sum(self._labels == UNLABELED))
            raise DataError(f"dataset has {n} unlabeled instances")

    @property
    def minority_indices(self) -> np.ndarray:
        return np.flatnonzero(self._labels == Label.MINORITY)

    @property
    def majority_indices(self) -> np.ndarray:
        return np.flatnonzero(self._labels == Label.MAJORITY)

    def with_labels(self, labels) -> "Dataset":
        return Dataset(self.schema, self._X, self._y, self.ids, labels, self.slices)

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.intp)
        return Dataset(
            self.schema,
            self._X[idx],
            self._y[idx],
            [self.ids[i] for i in idx],
            self._labels[idx],
            None if self.slices is None else [self.slices[i] for i in idx],
        )

    def concat(self, other: "Dataset") -> "Dataset":
        if other.schema != self.schema:
            raise DataError("cannot concatenate datasets with different schemas")
        slices = None
        if self.slices is not None and other.slices is not None:
            slices = self.slices + other.slices
        return Dataset(
            self.schema,
            np.vstack([self._X, other.X]),
            np.concatenate([self._y, other.y]),
            self.ids + other.ids,
            np.concatenate([self._labels, other.labels]),
            slices,
        )

    def season_keys(self) -> np.ndarray:
        """Integer week-of-year per instance (requires a seasonal feature)."""
        si = self.schema.seasonal_index
        if si is None:
            raise DataError("schema has no seasonal feature")
        weeks = self._X[:, si]
        keys = np.rint(weeks)
        if np.any(np.abs(weeks - keys) > 1e-9) or np.any((keys < 1) | (keys > 53)):
            raise DataError("seasonal feature must hold integer weeks in 1..53")
        return keys.astype(np.int64)


@dataclass(frozen=True)
class ClassBoundary:
    """Per climate feature (and season) mean/std used by the outlier rule.

    ``stats`` maps ``(feature_index, season_key)`` to ``(mean, std)``; the
    season key is ``None`` in GLOBAL mode and the integer week otherwise.
    """

    mode: BoundaryMode
    stats: Mapping[tuple[int, int | None], tuple[float, float]]
    multiplier: float = 2.0
    schema: FeatureSchema | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.multiplier < 0:
            raise DataError("multiplier must be >= 0")
        for key, (_, std) in self.stats.items():
            if std < 0:
                raise DataError(f"negative std for {key}")

    @property
    def feature_indices(self) -> tuple[int, ...]:
        return tuple(sorted({f for f, _ in self.stats}))

    @property
    def season_keys(self) -> tuple:
        return tuple(sorted({k for _, k in self.stats}, key=lambda k: -1 if k is None else k))

    def instance_keys(self, data: Dataset) -> np.ndarray | None:
        if self.mode is BoundaryMode.GLOBAL:
            return None
        return data.season_keys()

    def is_outlier(self, X: np.ndarray, keys: np.ndarray | None) -> np.ndarray:
        """Boolean mask: any climate feature strictly beyond ``multiplier * std``."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        feats = self.feature_indices
        if self.mode is BoundaryMode.GLOBAL:
            mean = np.array([self.stats[(f, None)][0] for f in feats])
            std = np.array([self.stats[(f, None)][1] for f in feats])
            return np.any(np.abs(X[:, feats] - mean) > self.multiplier * std, axis=1)
        keys = np.asarray(keys)
        known = self.season_keys
        missing = set(np.unique(keys).tolist()) - set(known)
        if missing:
            raise DataError(f"boundary has no statistics for week(s) {sorted(missing)}")
        lookup = {k: j for j, k in enumerate(known)}
        rows = np.array([lookup[int(k)] for k in keys], dtype=np.intp)
        mean = np.array([[self.stats[(f, k)][0] for f in feats] for k in known])
        std = np.array([[self.stats[(f, k)][1] for f in feats] for k in known])
        return np.any(np.abs(X[:, feats] - mean[rows]) > self.multiplier * std[rows], axis=1)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "multiplier": self.multiplier,
            "stats": [
                {"feature": f, "season": k, "mean": m, "std": s}
                for (f, k), (m, s) in sorted(self.stats.items(), key=lambda kv: (kv[0][0], -1 if kv[0][1] is None else kv[0][1]))
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ClassBoundary":
        stats = {(int(e["feature"]), e["season"]): (float(e["mean"]), float(e["std"])) for e in d["stats"]}
        return cls(BoundaryMode(d["mode"]), stats, float(d["multiplier"]))


@dataclass(frozen=True)
class ClassStats:
    majority_count: int
    minority_count: int

    @property
    def imbalance_ratio(self) -> float:
        if self.minority_count == 0:
            return math.inf
        return self.majority_count / self.minority_count

    @property
    def degenerate(self) -> bool:
        return self.minority_count == 0

    @property
    def deficit(self) -> int:
        return max(self.majority_count - self.minority_count, 0)


def compute_boundary(data: Dataset, mode=BoundaryMode.SEASONAL, multiplier: float = 2.0) -> ClassBoundary:
    """Fit population mean and std of each climate feature.

    In SEASONAL mode the statistics are computed separately for every
    week-of-year present in ``data``.
    """
    mode = BoundaryMode(mode)
    if len(data) == 0:
        raise DataError("cannot fit a boundary on an empty dataset")
    feats = data.schema.climate_feature_indices
    stats: dict = {}
    if mode is BoundaryMode.GLOBAL:
        for f in feats:
            col = data.X[:, f]
            stats[(f, None)] = (float(col.mean()), float(col.std()))
    else:
        if data.schema.seasonal_index is None:
            raise DataError("SEASONAL boundary requires a seasonal (week) feature")
        keys = data.season_keys()
        for k in np.unique(keys):
            rows = data.X[keys == k]
            for f in feats:
                stats[(f, int(k))] = (float(rows[:, f].mean()), float(rows[:, f].std()))
    return ClassBoundary(mode, stats, float(multiplier), data.schema)


def label_classes(data: Dataset, boundary: ClassBoundary) -> Dataset:
    """Return a copy of ``data`` labeled MINORITY where any climate feature is an outlier."""
    if boundary.schema is not None and boundary.schema != data.schema:
        raise DataError("boundary was fitted on a different schema")
    bfeats = set(boundary.feature_indices)
    if not bfeats or not bfeats <= set(range(data.schema.n_features)):
        raise DataError("boundary features do not fit the dataset schema")
    out = boundary.is_outlier(data.X, boundary.instance_keys(data))
    labels = np.where(out, Label.MINORITY, Label.MAJORITY).astype(np.int8)
    return data.with_labels(labels)


def class_stats(data: Dataset) -> ClassStats:
    data.require_labeled()
    n_min = int(np.sum(data.labels == Label.MINORITY))
    return ClassStats(majority_count=len(data) - n_min, minority_count=n_min)


# --- CSV --------------------------------------------------------------------


def infer_schema(header: Sequence[str], target: str = "growth", climate: Sequence[str] | None = None) -> FeatureSchema:
    if "id" not in header:
        raise DataError("CSV is missing the required 'id' column")
    if target not in header:
        raise DataError(f"CSV is missing the target column {target!r}")
    names = [h for h in header if h not in RESERVED_COLUMNS and h != target]
    if climate is None:
        climate = [c for c in DEFAULT_CLIMATE_NAMES if c in names]
        if not climate:
            raise DataError("no climate columns found; name them explicitly")
    unknown = [c for c in climate if c not in names]
    if unknown:
        raise DataError(f"climate columns not in CSV: {unknown}")
    return FeatureSchema(
        feature_names=tuple(names),
        climate_feature_indices=tuple(names.index(c) for c in climate),
        seasonal_index=names.index(SEASON_COLUMN) if SEASON_COLUMN in names else None,
        target_name=target,
    )


def read_csv_table(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    return header, rows


def read_csv(path, schema: FeatureSchema | None = None, target: str = "growth", climate=None) -> Dataset:
    """Load a dataset. Unparseable or non-finite cells are reported by row number.

    Row numbers count the header as row 1, as a spreadsheet would.
    """
    header, rows = read_csv_table(path)
    if schema is None:
        schema = infer_schema(header, target, climate)
    missing = [c for c in ("id", schema.target_name, *schema.feature_names) if c not in header]
    if missing:
        raise DataError(f"{path}: missing columns {missing}")
    col = {h: j for j, h in enumerate(header)}
    feat_cols = [col[f] for f in schema.feature_names]
    t_col = col[schema.target_name]
    lab_col = col.get("label")
    slice_col = col.get("slice")

    X = np.empty((len(rows), schema.n_features))
    y = np.empty(len(rows))
    ids, labels, slices, problems = [], [], [], []
    for i, row in enumerate(rows):
        rownum = i + 2
        if len(row) != len(header):
            problems.append(f"row {rownum}: expected {len(header)} fields, got {len(row)}")
            continue
        for j, c in enumerate(feat_cols + [t_col]):
            try:
                v = float(row[c])
            except ValueError:
                problems.append(f"row {rownum}: column {header[c]!r}: cannot parse {row[c]!r}")
                continue
            if not math.isfinite(v):
                problems.append(f"row {rownum}: column {header[c]!r}: non-finite value {row[c]!r}")
            if j < len(feat_cols):
                X[i, j] = v
            else:
                y[i] = v
        ids.append(row[col["id"]])
        if lab_col is not None:
            text = row[lab_col].strip()
            try:
                labels.append(UNLABELED if text == "" else int(Label.parse(text)))
            except DataError as exc:
                problems.append(f"row {rownum}: {exc}")
        if slice_col is not None:
            slices.append(row[slice_col])
    if problems:
        shown = "; ".join(problems[:20])
        more = f" (+{len(problems) - 20} more)" if len(problems) > 20 else ""
        raise DataError(f"{path}: rejected {len(problems)} value(s): {shown}{more}")
    return Dataset(
        schema,
        X,
        y,
        ids=ids,
        labels=labels if lab_col is not None else None,
        slices=slices if slice_col is not None else None,
    )


def format_float(v: float) -> str:
    return repr(float(v))


def write_csv(data: Dataset, path, extra_columns: Mapping[str, Sequence] | None = None):
    """Write ``data`` in the ingestion format; floats use shortest round-trip repr."""
    extra_columns = dict(extra_columns or {})
    header = ["id", *data.schema.feature_names, data.schema.target_name]
    labeled = bool(np.any(data.labels != UNLABELED))
    if labeled:
        header.append("label")
    if data.slices is not None:
        header.append("slice")
    header.extend(extra_columns)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(data)):
            row = [data.ids[i], *(format_float(v) for v in data.X[i]), format_float(data.y[i])]
            if labeled:
                lab = int(data.labels[i])
                row.append("" if lab == UNLABELED else str(Label(lab)))
            if data.slices is not None:
                row.append(data.slices[i])
            for values in extra_columns.values():
                v = values[i]
                if isinstance(v, float):
                    row.append("" if math.isnan(v) else format_float(v))
                else:
                    row.append("" if v is None else str(v))
            w.writerow(row)
