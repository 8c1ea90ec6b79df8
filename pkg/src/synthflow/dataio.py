"""CSV ingestion, schema application, and reversible min-max scaling.

A :class:`FeatureSchema` names every column of a flow CSV and assigns it a
role. Numeric and categorical columns become matrix features (categoricals
are integer-coded through a frozen dictionary carried by the schema), drop
columns are ignored, and the single label column keeps its text for
filtering. Cleaning maps infinities to the column's finite extrema and drops
rows with unparseable cells, so the resulting matrix is always finite.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

NUMERIC = "numeric"
CATEGORICAL = "categorical"
DROP = "drop"
LABEL = "label"
_ROLES = (NUMERIC, CATEGORICAL, DROP, LABEL)

DATASET_FORMAT = "sgdata"
DATASET_VERSION = 1


class DataError(ValueError):
    """Malformed input data or an impossible data request."""


@dataclass(frozen=True)
class Column:
    name: str
    role: str
    categories: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.role not in _ROLES:
            raise DataError(f"column {self.name!r}: unknown role {self.role!r}")
        if self.role == CATEGORICAL and not self.categories:
            raise DataError(
                f"column {self.name!r}: categorical columns need a frozen "
                f"category list"
            )


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered column contract between a raw CSV and the feature matrix."""

    columns: tuple[Column, ...]

    def __post_init__(self) -> None:
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise DataError(f"duplicate column names in schema: {dupes}")
        labels = [c for c in self.columns if c.role == LABEL]
        if len(labels) != 1:
            raise DataError(f"schema needs exactly one label column, got {len(labels)}")
        if not self.feature_columns():
            raise DataError("schema needs at least one numeric column")

    def feature_columns(self) -> list[Column]:
        """Columns that become matrix features, in schema order.

        Categorical columns are integer-coded and then treated as numeric, so
        they count as features.
        """
        return [c for c in self.columns if c.role in (NUMERIC, CATEGORICAL)]

    def feature_names(self) -> list[str]:
        return [c.name for c in self.feature_columns()]

    @property
    def label_column(self) -> Column:
        return next(c for c in self.columns if c.role == LABEL)

    def to_dict(self) -> dict:
        cols = []
        for c in self.columns:
            entry: dict = {"name": c.name, "role": c.role}
            if c.categories is not None:
                entry["categories"] = list(c.categories)
            cols.append(entry)
        return {"columns": cols}

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureSchema":
        try:
            cols = data["columns"]
        except (TypeError, KeyError) as exc:
            raise DataError("schema document needs a 'columns' list") from exc
        parsed = []
        for entry in cols:
            cats = entry.get("categories")
            parsed.append(
                Column(
                    name=str(entry["name"]),
                    role=str(entry["role"]).lower(),
                    categories=tuple(cats) if cats is not None else None,
                )
            )
        return cls(tuple(parsed))


def schema_from_json(path) -> FeatureSchema:
    """Load a schema override from a JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise DataError(f"schema file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"schema file {path} is not valid JSON: {exc}") from exc
    return FeatureSchema.from_dict(data)


def schema_to_json(schema: FeatureSchema, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schema.to_dict(), fh, indent=2)
        fh.write("\n")


@dataclass
class RawTable:
    """Rectangular text table: header names plus rows of cells."""

    header: list[str]
    rows: list[list[str]]


def _mangle_duplicates(names: list[str]) -> list[str]:
    """Disambiguate repeated header names with .1/.2 suffixes.

    CICIDS2017 ships a duplicated 'Fwd Header Length' column; schemas refer
    to the second occurrence as 'Fwd Header Length.1'.
    """
    seen: dict[str, int] = {}
    out = []
    for name in names:
        count = seen.get(name, 0)
        seen[name] = count + 1
        out.append(name if count == 0 else f"{name}.{count}")
    return out


def parse_csv(source, has_header: bool = True, names: list[str] | None = None) -> RawTable:
    """Parse a comma-separated file into a rectangular table.

    ``source`` is a path or an open text stream. Header cells are
    whitespace-trimmed and duplicates are suffix-mangled. For headerless
    files pass ``has_header=False`` and supply ``names`` (for example from a
    schema). Blank lines are skipped; a ragged row is an error naming the
    1-based data row.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", errors="replace", newline="") as fh:
            return parse_csv(fh, has_header=has_header, names=names)

    reader = csv.reader(source)
    header: list[str] | None = None
    rows: list[list[str]] = []
    if has_header:
        for record in reader:
            if record:
                header = _mangle_duplicates([cell.strip() for cell in record])
                break
        if header is None:
            raise DataError("empty CSV: no header row found")
    else:
        if not names:
            raise DataError("headerless CSV needs schema-supplied column names")
        header = list(names)

    for record in reader:
        if not record:
            continue
        if len(record) != len(header):
            raise DataError(
                f"ragged row {len(rows) + 1}: expected {len(header)} cells, "
                f"got {len(record)}"
            )
        rows.append(record)
    if not has_header and not rows:
        raise DataError("empty CSV: no data rows found")
    return RawTable(header, rows)


def clean_numeric(
    table: RawTable, schema: FeatureSchema
) -> tuple[np.ndarray, list[str], int]:
    """Parse feature cells to a finite float64 matrix.

    Policy: +Infinity becomes the column's max finite value, -Infinity the
    min finite value; NaN or unparseable cells (including unknown categorical
    values) drop the whole row. Returns (values, labels, dropped_row_count)
    with matrix columns in schema feature order.
    """
    index = {name: i for i, name in enumerate(table.header)}
    feature_cols = schema.feature_columns()
    required = [c.name for c in feature_cols] + [schema.label_column.name]
    missing = [name for name in required if name not in index]
    if missing:
        raise DataError(f"schema columns missing from CSV header: {missing}")

    col_idx = [index[c.name] for c in feature_cols]
    label_idx = index[schema.label_column.name]
    cat_maps: list[dict[str, float] | None] = [
        {v: float(i) for i, v in enumerate(c.categories)} if c.role == CATEGORICAL else None
        for c in feature_cols
    ]

    n_rows, n_cols = len(table.rows), len(feature_cols)
    values = np.empty((n_rows, n_cols))
    keep = np.ones(n_rows, dtype=bool)
    for r, row in enumerate(table.rows):
        for j, (src, cats) in enumerate(zip(col_idx, cat_maps)):
            cell = row[src].strip()
            if cats is not None:
                coded = cats.get(cell)
                if coded is None:
                    keep[r] = False
                    break
                values[r, j] = coded
                continue
            try:
                parsed = float(cell)
            except ValueError:
                keep[r] = False
                break
            if np.isnan(parsed):
                keep[r] = False
                break
            values[r, j] = parsed

    values = values[keep]
    labels = [table.rows[r][label_idx].strip() for r in np.flatnonzero(keep)]
    dropped = int(n_rows - values.shape[0])

    for j, col in enumerate(feature_cols):
        column = values[:, j]
        finite = np.isfinite(column)
        if column.size and not finite.any():
            raise DataError(f"column {col.name!r} has no finite values")
        if not finite.all():
            column[column == np.inf] = column[finite].max()
            column[column == -np.inf] = column[finite].min()
    return values, labels, dropped


@dataclass
class NormalizationStats:
    """Per-feature min/max in original units; the key to denormalization."""

    col_min: np.ndarray
    col_max: np.ndarray

    def __post_init__(self) -> None:
        self.col_min = np.asarray(self.col_min, dtype=np.float64)
        self.col_max = np.asarray(self.col_max, dtype=np.float64)
        if self.col_min.shape != self.col_max.shape or self.col_min.ndim != 1:
            raise DataError("normalization stats need matching 1-d min/max")
        if not (np.isfinite(self.col_min).all() and np.isfinite(self.col_max).all()):
            raise DataError("normalization stats must be finite")
        if (self.col_min > self.col_max).any():
            raise DataError("normalization stats with min > max")

    @property
    def width(self) -> int:
        return self.col_min.shape[0]

    def to_dict(self) -> dict:
        return {"min": self.col_min.tolist(), "max": self.col_max.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "NormalizationStats":
        return cls(np.asarray(data["min"]), np.asarray(data["max"]))


def minmax_normalize(values: np.ndarray) -> tuple[np.ndarray, NormalizationStats]:
    """Scale each column to [0, 1]; constant columns map to 0."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] == 0:
        raise DataError(f"cannot normalize matrix of shape {values.shape}")
    if not np.isfinite(values).all():
        raise DataError("cannot normalize non-finite values")
    col_min = values.min(axis=0)
    col_max = values.max(axis=0)
    span = col_max - col_min
    safe_span = np.where(span > 0, span, 1.0)
    normalized = (values - col_min) / safe_span
    normalized[:, span == 0] = 0.0
    return normalized, NormalizationStats(col_min, col_max)


def denormalize(normalized: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    """Map normalized values back to feature units; no clamping."""
    normalized = np.asarray(normalized, dtype=np.float64)
    if normalized.ndim != 2 or normalized.shape[1] != stats.width:
        raise DataError(
            f"matrix has {normalized.shape[-1] if normalized.ndim else '?'} "
            f"columns, stats describe {stats.width}"
        )
    return normalized * (stats.col_max - stats.col_min) + stats.col_min


@dataclass
class DatasetMatrix:
    """Normalized feature matrix plus labels, stats, and schema provenance."""

    features: np.ndarray
    labels: list[str]
    stats: NormalizationStats
    schema: FeatureSchema

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        d = len(self.schema.feature_names())
        if self.features.ndim != 2 or self.features.shape[1] != d:
            raise DataError(
                f"feature matrix shape {self.features.shape} does not match "
                f"schema width {d}"
            )
        if len(self.labels) != self.features.shape[0]:
            raise DataError("label count does not match row count")
        if self.features.size and not np.isfinite(self.features).all():
            raise DataError("dataset features must be finite")
        if self.features.size and (
            self.features.min() < 0.0 or self.features.max() > 1.0
        ):
            raise DataError("dataset features must lie in [0, 1]")

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]


def filter_by_label(data: DatasetMatrix, wanted) -> DatasetMatrix:
    """Keep rows whose label matches ``wanted`` (case-insensitive, trimmed)."""
    wanted_norm = {str(w).strip().lower() for w in wanted}
    if not wanted_norm:
        raise DataError("no labels requested")
    mask = np.array(
        [lbl.strip().lower() in wanted_norm for lbl in data.labels], dtype=bool
    )
    if not mask.any():
        available = sorted({lbl.strip() for lbl in data.labels})
        raise DataError(
            f"no rows match labels {sorted(wanted_norm)}; available: {available}"
        )
    labels = [lbl for lbl, keep in zip(data.labels, mask) if keep]
    return DatasetMatrix(data.features[mask], labels, data.stats, data.schema)


def split(
    data: DatasetMatrix, fraction: float, rng: np.random.Generator
) -> tuple[DatasetMatrix, DatasetMatrix]:
    """Deterministic shuffled split; part_a gets round(fraction * n) rows."""
    if not 0.0 < fraction < 1.0:
        raise DataError(f"split fraction must be in (0, 1), got {fraction}")
    n = data.n_rows
    if n < 2:
        raise DataError(f"cannot split {n} rows")
    perm = rng.permutation(n)
    k = int(np.floor(fraction * n + 0.5))
    idx_a, idx_b = perm[:k], perm[k:]

    def take(idx):
        return DatasetMatrix(
            data.features[idx],
            [data.labels[i] for i in idx],
            data.stats,
            data.schema,
        )

    return take(idx_a), take(idx_b)


def save_dataset(data: DatasetMatrix, path) -> None:
    """Write the dataset cache as versioned JSON (exact float round-trip)."""
    doc = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "schema": data.schema.to_dict(),
        "stats": data.stats.to_dict(),
        "labels": data.labels,
        "features": data.features.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_dataset(path) -> DatasetMatrix:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise DataError(f"dataset cache not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"dataset cache {path} is corrupt: {exc}") from exc
    if doc.get("format") != DATASET_FORMAT:
        raise DataError(f"{path} is not a dataset cache")
    if doc.get("version") != DATASET_VERSION:
        raise DataError(
            f"dataset cache version {doc.get('version')} unsupported "
            f"(expected {DATASET_VERSION})"
        )
    schema = FeatureSchema.from_dict(doc["schema"])
    features = np.asarray(doc["features"], dtype=np.float64)
    if features.size == 0:
        features = features.reshape(0, len(schema.feature_names()))
    return DatasetMatrix(
        features,
        list(doc["labels"]),
        NormalizationStats.from_dict(doc["stats"]),
        schema,
    )
