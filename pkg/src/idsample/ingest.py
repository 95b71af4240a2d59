"""CSV ingestion and preprocessing for labeled traffic datasets.

Pipeline order::

    parse_csv -> infer_schema (optionally overridden) -> encode
              -> dedup -> drop_constant_columns

The resulting :class:`Dataset` carries an encoded float feature matrix, a
binary normal/attack label (0/1) and the fine-grained traffic type.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.preprocessing import OrdinalEncoder
from sklearn.utils.validation import check_array, check_is_fitted

NUMERIC = "numeric"
CATEGORICAL = "categorical"
TRAFFIC_TYPE = "traffic_type"
BINARY_LABEL = "binary_label"
DROP = "drop"
KINDS = frozenset({NUMERIC, CATEGORICAL, TRAFFIC_TYPE, BINARY_LABEL, DROP})

LABEL_COLUMN = "__label"
TYPE_COLUMN = "__type"


class IngestError(ValueError):
    """Raised for malformed input files or inconsistent schemas."""


class NoInformativeFeatures(IngestError):
    pass


# ------------------------------------------------------------------ #
#  Raw tables                                                         #
# ------------------------------------------------------------------ #


@dataclass(frozen=True)
class RawTable:
    column_names: Tuple[str, ...]
    columns: Tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(set(self.column_names)) != len(self.column_names):
            raise IngestError(f"duplicate column names: {list(self.column_names)}")
        if len(self.columns) != len(self.column_names):
            raise IngestError("column count does not match column names")
        lengths = {len(c) for c in self.columns}
        if len(lengths) > 1:
            raise IngestError(f"columns have unequal lengths: {sorted(lengths)}")

    @property
    def row_count(self) -> int:
        return len(self.columns[0]) if self.columns else 0

    def column(self, name: str) -> np.ndarray:
        try:
            return self.columns[self.column_names.index(name)]
        except ValueError:
            raise KeyError(name) from None


def parse_csv(path, has_header: bool = True) -> RawTable:
    """Read a comma-delimited UTF-8 file, keeping every field as text.

    Without a header the columns are named ``col0 .. colN-1``. Rows with a
    field count different from the first row raise :class:`IngestError`
    naming the 1-based line number.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows: List[List[str]] = []
        width = None
        for row in reader:
            if not row:
                # blank line
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise IngestError(
                    f"{path}: ragged row at line {reader.line_num}: "
                    f"expected {width} fields, got {len(row)}"
                )
            rows.append(row)

    if has_header:
        if not rows:
            raise IngestError(f"{path}: no rows")
        names = tuple(c.strip() for c in rows[0])
        rows = rows[1:]
    else:
        names = tuple(f"col{i}" for i in range(width or 0))
    if not rows:
        raise IngestError(f"{path}: no rows")

    columns = tuple(np.array(col, dtype=object) for col in zip(*rows))
    return RawTable(names, columns)


def _parse_reals(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Parse text to float64.

    Returns ``(parsed, bad)`` where ``bad`` flags entries that are not finite
    reals (empty strings included). numpy's parser is exact (round-trips
    ``repr``), unlike ``pandas.to_numeric``.
    """
    try:
        parsed = np.asarray(values, dtype=str).astype(np.float64)
    except ValueError:
        uniq, inverse = np.unique(np.asarray(values, dtype=str), return_inverse=True)
        parsed_uniq = np.empty(len(uniq))
        for i, text in enumerate(uniq):
            try:
                parsed_uniq[i] = float(text)
            except ValueError:
                parsed_uniq[i] = np.nan
        parsed = parsed_uniq[inverse.reshape(-1)]
    bad = ~np.isfinite(parsed)
    return parsed, bad


# ------------------------------------------------------------------ #
#  Schema                                                             #
# ------------------------------------------------------------------ #


@dataclass(frozen=True)
class SchemaSpec:
    kinds: Mapping[str, str]
    label_mapping: Mapping[str, int]
    normal_class_name: str

    def __post_init__(self):
        unknown = {k for k in self.kinds.values() if k not in KINDS}
        if unknown:
            raise IngestError(f"unknown column kinds: {sorted(unknown)}")
        n_type = sum(k == TRAFFIC_TYPE for k in self.kinds.values())
        if n_type != 1:
            raise IngestError(f"exactly one traffic_type column required, found {n_type}")
        if sum(k == BINARY_LABEL for k in self.kinds.values()) > 1:
            raise IngestError("at most one binary_label column allowed")
        for name, value in self.label_mapping.items():
            expected = 0 if name == self.normal_class_name else 1
            if value != expected:
                raise IngestError(
                    f"label_mapping[{name!r}] = {value}, expected {expected}"
                )

    @property
    def traffic_type_column(self) -> str:
        return next(c for c, k in self.kinds.items() if k == TRAFFIC_TYPE)

    @property
    def binary_label_column(self) -> Optional[str]:
        return next((c for c, k in self.kinds.items() if k == BINARY_LABEL), None)

    def label_of(self, class_name: str) -> int:
        return self.label_mapping.get(class_name, 0 if class_name == self.normal_class_name else 1)

    def with_kinds(self, overrides: Mapping[str, str]) -> "SchemaSpec":
        kinds = dict(self.kinds)
        if TRAFFIC_TYPE in overrides.values():
            # only one traffic-type column may survive the override
            kinds = {c: (CATEGORICAL if k == TRAFFIC_TYPE else k) for c, k in kinds.items()}
        kinds.update(overrides)
        return replace(self, kinds=kinds)


def infer_schema(
    table: RawTable,
    traffic_type_column: str,
    normal_class_name: str,
    binary_label_column: Optional[str] = None,
) -> SchemaSpec:
    """Guess a kind for every column of ``table``.

    A column is numeric when every non-empty entry parses as a finite real,
    categorical otherwise.
    """
    if traffic_type_column not in table.column_names:
        raise IngestError(f"traffic-type column {traffic_type_column!r} not found")
    if binary_label_column is not None and binary_label_column not in table.column_names:
        raise IngestError(f"binary-label column {binary_label_column!r} not found")

    kinds: Dict[str, str] = {}
    for name, values in zip(table.column_names, table.columns):
        if name == traffic_type_column:
            kinds[name] = TRAFFIC_TYPE
        elif name == binary_label_column:
            kinds[name] = BINARY_LABEL
        else:
            _, bad = _parse_reals(values)
            empty = np.asarray(values, dtype=str) == ""
            kinds[name] = NUMERIC if not np.any(bad & ~empty) else CATEGORICAL

    classes = sorted(set(table.column(traffic_type_column)))
    mapping = {c: 0 if c == normal_class_name else 1 for c in classes}
    return SchemaSpec(kinds, mapping, normal_class_name)


def read_schema_file(path) -> Tuple[Dict[str, str], Optional[str], Optional[str]]:
    """Parse a ``key=value`` schema override file.

    Returns ``(kinds, traffic_type_column, normal_class_name)``. Reserved keys
    are ``traffic_type`` and ``normal``; every other key is a column name whose
    value must be a column kind. Blank lines and ``#`` comments are ignored.
    """
    kinds: Dict[str, str] = {}
    traffic_type = normal = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise IngestError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = key.strip(), value.strip()
            if key == "traffic_type":
                traffic_type = value
            elif key == "normal":
                normal = value
            elif value not in KINDS:
                raise IngestError(f"{path}:{lineno}: unknown kind {value!r} for column {key!r}")
            else:
                kinds[key] = value
    if traffic_type is not None:
        kinds[traffic_type] = TRAFFIC_TYPE
    return kinds, traffic_type, normal


# ------------------------------------------------------------------ #
#  Dataset                                                            #
# ------------------------------------------------------------------ #


def _frozen(a: np.ndarray, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Encoded feature matrix with binary and traffic-type labels.

    ``traffic_type`` holds small integer class ids indexing ``class_names``;
    the dictionary is kept whole on subsets, so ids stay comparable between a
    dataset and any sample drawn from it.
    """

    features: np.ndarray
    feature_names: Tuple[str, ...]
    binary_label: np.ndarray
    traffic_type: np.ndarray
    class_names: Tuple[str, ...]
    normal_class: str
    provenance: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2:
            raise IngestError("features must be a 2-D matrix")
        n = features.shape[0]
        if features.shape[1] != len(self.feature_names):
            raise IngestError("feature_names length does not match feature columns")
        if len(self.binary_label) != n or len(self.traffic_type) != n:
            raise IngestError("label columns must have one entry per row")
        object.__setattr__(self, "features", _frozen(features, np.float64))
        object.__setattr__(self, "binary_label", _frozen(self.binary_label, np.int8))
        object.__setattr__(self, "traffic_type", _frozen(self.traffic_type, np.int32))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "provenance", tuple(self.provenance))
        if np.any((self.binary_label != 0) & (self.binary_label != 1)):
            raise IngestError("binary labels must be 0 or 1")
        if n and (self.traffic_type.min() < 0 or self.traffic_type.max() >= len(self.class_names)):
            raise IngestError("traffic_type ids out of range of class_names")

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def type_names(self) -> np.ndarray:
        return np.asarray(self.class_names, dtype=object)[self.traffic_type]

    def take(self, indices, note: Optional[str] = None) -> "Dataset":
        indices = np.asarray(indices, dtype=np.intp)
        prov = self.provenance + ((note,) if note else ())
        return replace(
            self,
            features=self.features[indices],
            binary_label=self.binary_label[indices],
            traffic_type=self.traffic_type[indices],
            provenance=prov,
        )

    def with_note(self, note: str) -> "Dataset":
        return replace(self, provenance=self.provenance + (note,))

    def equals(self, other: "Dataset") -> bool:
        return (
            self.feature_names == other.feature_names
            and self.class_names == other.class_names
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.binary_label, other.binary_label)
            and np.array_equal(self.traffic_type, other.traffic_type)
        )


def encode(table: RawTable, schema: SchemaSpec) -> Dataset:
    """Turn a text table into a :class:`Dataset` following ``schema``.

    Categorical values are replaced by their 0-based rank among the column's
    sorted distinct values. Empty or unparseable cells in numeric columns are
    errors; nothing is imputed.
    """
    missing = [c for c in table.column_names if c not in schema.kinds]
    if missing:
        raise IngestError(f"schema does not cover columns: {missing}")

    names: List[str] = []
    blocks: List[np.ndarray] = []
    categorical_cols = [c for c in table.column_names if schema.kinds[c] == CATEGORICAL]
    if categorical_cols:
        encoder = CategoricalRankEncoder().fit(
            np.column_stack([table.column(c) for c in categorical_cols])
        )
        ranks = encoder.transform(np.column_stack([table.column(c) for c in categorical_cols]))
        cat_lookup = {c: ranks[:, i] for i, c in enumerate(categorical_cols)}

    for name, values in zip(table.column_names, table.columns):
        kind = schema.kinds[name]
        if kind == NUMERIC:
            parsed, bad = _parse_reals(values)
            if bad.any():
                row = int(np.flatnonzero(bad)[0])
                raise IngestError(
                    f"column {name!r}, row {row + 1}: cannot parse {values[row]!r} as a number"
                )
            names.append(name)
            blocks.append(parsed)
        elif kind == CATEGORICAL:
            names.append(name)
            blocks.append(cat_lookup[name])

    type_text = np.asarray(table.column(schema.traffic_type_column), dtype=str)
    class_names = tuple(sorted(set(type_text.tolist())))
    class_ids = np.searchsorted(np.asarray(class_names, dtype=str), type_text)
    derived = np.array([schema.label_of(c) for c in class_names], dtype=np.int8)[class_ids]

    label_col = schema.binary_label_column
    if label_col is not None:
        parsed, bad = _parse_reals(table.column(label_col))
        if bad.any() or np.any((parsed != 0) & (parsed != 1)):
            raise IngestError(f"binary-label column {label_col!r} must hold only 0/1")
        disagree = int(np.sum(parsed.astype(np.int8) != derived))
        if disagree:
            raise IngestError(
                f"binary-label column {label_col!r} disagrees with traffic type "
                f"{schema.traffic_type_column!r} on {disagree} rows"
            )

    features = np.column_stack(blocks) if blocks else np.empty((table.row_count, 0))
    return Dataset(
        features=features,
        feature_names=tuple(names),
        binary_label=derived,
        traffic_type=class_ids,
        class_names=class_names,
        normal_class=schema.normal_class_name,
        provenance=(f"encoded {table.row_count} rows, {len(names)} features",),
    )


def duplicate_mask(ds: Dataset) -> np.ndarray:
    """True for every row that repeats an earlier (features, labels) tuple."""
    frame = pd.DataFrame(ds.features)
    frame["__label"] = ds.binary_label
    frame["__type"] = ds.traffic_type
    return frame.duplicated(keep="first").to_numpy()


def dedup(ds: Dataset) -> Dataset:
    """Drop repeated records, keeping first occurrences in original order."""
    dup = duplicate_mask(ds)
    removed = int(dup.sum())
    return ds.take(np.flatnonzero(~dup), note=f"dedup: removed {removed} duplicate rows")


class ConstantColumnDropper(TransformerMixin, BaseEstimator):
    """Remove feature columns holding a single distinct value.

    Attributes
    ----------
    keep_ : ndarray of bool
        Mask over input columns retained by :meth:`transform`.
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_min_samples=1)
        self.n_features_in_ = X.shape[1]
        self.keep_ = np.any(X != X[:1], axis=0)
        return self

    def transform(self, X):
        check_is_fitted(self, "keep_")
        X = check_array(X, dtype=np.float64, ensure_min_samples=0)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        return X[:, self.keep_]


def drop_constant_columns(ds: Dataset) -> Dataset:
    dropper = ConstantColumnDropper().fit(ds.features)
    if not dropper.keep_.any():
        raise NoInformativeFeatures("no informative features: every column is constant")
    dropped = [n for n, k in zip(ds.feature_names, dropper.keep_) if not k]
    return replace(
        ds,
        features=dropper.transform(ds.features),
        feature_names=tuple(n for n, k in zip(ds.feature_names, dropper.keep_) if k),
        provenance=ds.provenance + (f"dropped constant columns: {', '.join(dropped) or '(none)'}",),
    )


class CategoricalRankEncoder(TransformerMixin, BaseEstimator):
    """Ordinal encoding by lexicographic rank of each column's distinct values.

    Thin wrapper over :class:`sklearn.preprocessing.OrdinalEncoder`, whose
    ``categories="auto"`` already sorts distinct values; values unseen during
    ``fit`` raise on ``transform``.
    """

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=object)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        self.encoder_ = OrdinalEncoder(dtype=np.float64).fit(X.astype(str))
        self.categories_ = self.encoder_.categories_
        return self

    def transform(self, X):
        check_is_fitted(self, "encoder_")
        X = np.asarray(X, dtype=object)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        return self.encoder_.transform(X.astype(str))


# ------------------------------------------------------------------ #
#  Serialization                                                      #
# ------------------------------------------------------------------ #


def _as_frame(ds: Dataset) -> pd.DataFrame:
    cols = {}
    for j, name in enumerate(ds.feature_names):
        col = ds.features[:, j]
        if np.all(np.mod(col, 1) == 0) and np.all(np.abs(col) < 2**53):
            cols[name] = col.astype(np.int64)
        else:
            cols[name] = col
    frame = pd.DataFrame(cols, columns=list(ds.feature_names))
    frame[LABEL_COLUMN] = ds.binary_label.astype(np.int64)
    frame[TYPE_COLUMN] = ds.type_names()
    return frame


def write_dataset(ds: Dataset, path) -> None:
    """Write ``ds`` as CSV with ``__label`` and ``__type`` appended.

    Integral feature columns are written without a decimal point; all other
    values use the shortest round-trip float representation.
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    _as_frame(ds).to_csv(path, index=False, lineterminator="\n", encoding="utf-8")


def read_dataset(path, normal_class: Optional[str] = None) -> Dataset:
    """Load a CSV previously written by :func:`write_dataset`.

    The normal class is the traffic type whose rows carry label 0; pass
    ``normal_class`` when the file holds no normal rows.
    """
    table = parse_csv(path, has_header=True)
    for col in (LABEL_COLUMN, TYPE_COLUMN):
        if col not in table.column_names:
            raise IngestError(f"{path}: missing {col} column; not a dataset file")
    labels, bad = _parse_reals(table.column(LABEL_COLUMN))
    if bad.any():
        raise IngestError(f"{path}: unparseable {LABEL_COLUMN} entry")
    types = np.asarray(table.column(TYPE_COLUMN), dtype=str)
    normals = set(types[labels == 0].tolist())
    if len(normals) > 1:
        raise IngestError(f"{path}: several traffic types labelled 0: {sorted(normals)}")
    if normals:
        normal = normals.pop()
        if normal_class is not None and normal != normal_class:
            raise IngestError(f"{path}: normal class is {normal!r}, expected {normal_class!r}")
    elif normal_class is not None:
        normal = normal_class
    else:
        raise IngestError(f"{path}: no normal rows; pass the normal class name explicitly")

    kinds = {c: NUMERIC for c in table.column_names}
    kinds[LABEL_COLUMN] = BINARY_LABEL
    kinds[TYPE_COLUMN] = TRAFFIC_TYPE
    classes = sorted(set(types.tolist()))
    schema = SchemaSpec(kinds, {c: 0 if c == normal else 1 for c in classes}, normal)
    ds = encode(table, schema)
    return replace(ds, provenance=(f"read from {path}",))


def align_classes(*datasets: Dataset) -> List[Dataset]:
    """Re-index traffic types so all datasets share one class dictionary."""
    names = tuple(sorted(set().union(*(d.class_names for d in datasets))))
    lookup = {n: i for i, n in enumerate(names)}
    out = []
    for d in datasets:
        remap = np.array([lookup[n] for n in d.class_names], dtype=np.int32)
        out.append(replace(d, traffic_type=remap[d.traffic_type], class_names=names))
    return out


def preprocess(table: RawTable, schema: SchemaSpec) -> Dataset:
    """encode -> dedup -> drop_constant_columns."""
    return drop_constant_columns(dedup(encode(table, schema)))
