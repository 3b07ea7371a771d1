"""Tabular datasets: CSV + schema sidecar loading, encoding, scaling and fold splitting.

Schema sidecar format, one column per line (``#`` starts a comment)::

    sepal_length: numeric
    color: categorical
    size: categorical small,medium,large
    species: label

A categorical column without an explicit vocabulary takes its categories in
order of first appearance in the file.
"""

from __future__ import annotations

import csv
import enum
import re
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .encoder import AffineTransform
from .linalg import Rng, ShapeError

BUNDLED = ("iris", "wine", "glass", "digits")


class DataError(ValueError):
    """Malformed dataset file or schema."""


class ColumnKind(str, enum.Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"
    LABEL = "label"


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: ColumnKind
    vocabulary: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", ColumnKind(self.kind))
        object.__setattr__(self, "vocabulary", tuple(self.vocabulary))
        if len(set(self.vocabulary)) != len(self.vocabulary):
            raise DataError(f"column {self.name!r} has a repeated category in {self.vocabulary}")

    @property
    def width(self) -> int:
        if self.kind is ColumnKind.NUMERIC:
            return 1
        if self.kind is ColumnKind.CATEGORICAL:
            return len(self.vocabulary)
        return 0


@dataclass(frozen=True)
class Dataset:
    name: str
    features: np.ndarray
    labels: np.ndarray
    schema: tuple[ColumnSchema, ...]
    class_names: tuple[str, ...]

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ShapeError(f"features must be 2-D, got shape {self.features.shape}")
        if len(self.labels) != self.features.shape[0]:
            raise ShapeError(f"{self.features.shape[0]} rows but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise DataError("label ids must lie in [0, number of classes)")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def numeric_mask(self) -> np.ndarray:
        """Per encoded feature column: True if it came from a numeric column."""
        mask = []
        for col in self.schema:
            mask.extend([col.kind is ColumnKind.NUMERIC] * col.width)
        return np.array(mask, dtype=bool)

    def subset(self, rows) -> Dataset:
        rows = np.asarray(rows, dtype=np.intp)
        return replace(self, features=self.features[rows], labels=self.labels[rows])

    def with_features(self, features: np.ndarray) -> Dataset:
        return replace(self, features=np.ascontiguousarray(features, dtype=np.float64))


_SCHEMA_LINE = re.compile(r"^\s*([^:=]+?)\s*[:=]\s*(\w+)\s*(.*?)\s*$")


def parse_schema(text: str) -> list[ColumnSchema]:
    cols = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SCHEMA_LINE.match(line)
        if not m:
            raise DataError(f"schema line {lineno}: expected 'column: kind', got {raw!r}")
        name, kind, rest = m.groups()
        try:
            kind = ColumnKind(kind.lower())
        except ValueError:
            raise DataError(f"schema line {lineno}: unknown kind {kind!r} (numeric, categorical or label)") from None
        vocab = tuple(v.strip() for v in rest.split(",")) if rest else ()
        if vocab and kind is not ColumnKind.CATEGORICAL:
            raise DataError(f"schema line {lineno}: only categorical columns take a vocabulary")
        cols.append(ColumnSchema(name, kind, vocab))
    labels = [c for c in cols if c.kind is ColumnKind.LABEL]
    if len(labels) != 1:
        raise DataError(f"schema must name exactly one label column, found {len(labels)}")
    return cols


def format_schema(schema) -> str:
    lines = []
    for col in schema:
        extra = " " + ",".join(col.vocabulary) if col.vocabulary else ""
        lines.append(f"{col.name}: {col.kind.value}{extra}")
    return "\n".join(lines) + "\n"


def read_schema(path) -> list[ColumnSchema]:
    return parse_schema(Path(path).read_text())


def one_hot(values, vocabulary) -> np.ndarray:
    vocabulary = list(vocabulary)
    position = {v: i for i, v in enumerate(vocabulary)}
    out = np.zeros((len(values), len(vocabulary)))
    for r, v in enumerate(values):
        if v not in position:
            raise DataError(f"value {v!r} is not in the vocabulary {vocabulary}")
        out[r, position[v]] = 1.0
    return out


def load_csv(path, schema, class_names=None, name: str | None = None) -> Dataset:
    """Load a headed CSV file, parsing numeric columns and one-hot encoding categorical ones.

    ``schema`` is a sidecar path or a list of :class:`ColumnSchema`.  Pass the
    ``schema`` and ``class_names`` of a training set to encode a query file
    consistently with it.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such data file: {path}")
    if not isinstance(schema, (list, tuple)):
        schema = read_schema(schema)
    schema = list(schema)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = [(i, r) for i, r in enumerate(rows[1:], start=2) if any(cell.strip() for cell in r)]
    col_pos = {}
    for col in schema:
        if col.name not in header:
            raise DataError(f"{path}: schema column {col.name!r} not in header {header}")
        col_pos[col.name] = header.index(col.name)
    extra = [h for h in header if h not in col_pos]
    if extra:
        raise DataError(f"{path}: header columns {extra} missing from the schema")

    ragged = [lineno for lineno, r in body if len(r) != len(header)]
    if ragged:
        raise DataError(f"{path}: rows with {len(header)} expected fields violated at lines {ragged[:20]}")

    columns = {col.name: [r[col_pos[col.name]].strip() for _, r in body] for col in schema}
    linenos = [lineno for lineno, _ in body]
    bad_rows: set[int] = set()
    for col in schema:
        for v, lineno in zip(columns[col.name], linenos):
            if col.kind is ColumnKind.NUMERIC:
                try:
                    ok = np.isfinite(float(v))
                except ValueError:
                    ok = False
            else:
                ok = v not in ("", "?")
            if not ok:
                bad_rows.add(lineno)
    if bad_rows:
        raise DataError(f"{path}: unparseable or missing cells at lines {sorted(bad_rows)[:20]}")

    blocks = []
    resolved = []
    for col in schema:
        values = columns[col.name]
        if col.kind is ColumnKind.NUMERIC:
            blocks.append(np.array([float(v) for v in values]).reshape(-1, 1))
        elif col.kind is ColumnKind.CATEGORICAL:
            vocab = col.vocabulary or tuple(dict.fromkeys(values))
            unknown = sorted(set(values) - set(vocab))
            if unknown:
                raise DataError(f"{path}: column {col.name!r} has unknown categories {unknown}")
            col = replace(col, vocabulary=vocab)
            blocks.append(one_hot(values, vocab))
        else:
            label_values = values
        resolved.append(col)

    if class_names is None:
        class_names = tuple(dict.fromkeys(label_values))
    lookup = {c: i for i, c in enumerate(class_names)}
    unknown = sorted({v for v in label_values if v not in lookup})
    if unknown:
        raise DataError(f"{path}: unknown class labels {unknown}")
    labels = np.array([lookup[v] for v in label_values], dtype=np.intp)
    features = np.hstack(blocks) if blocks else np.zeros((len(body), 0))
    return Dataset(
        name or path.stem,
        np.ascontiguousarray(features, dtype=np.float64),
        labels,
        tuple(resolved),
        tuple(class_names),
    )


def bundled_path(name: str) -> tuple[Path, Path]:
    if name not in BUNDLED:
        raise DataError(f"no bundled dataset {name!r}; available: {', '.join(BUNDLED)}")
    root = resources.files("selfenc") / "datasets"
    return Path(str(root / f"{name}.csv")), Path(str(root / f"{name}.schema"))


def load_bundled(name: str) -> Dataset:
    csv_path, schema_path = bundled_path(name)
    return load_csv(csv_path, schema_path, name=name)


def resolve_dataset(spec: str, schema=None) -> Dataset:
    """A bundled dataset name, ``path.csv`` (schema beside it), or ``path.csv:path.schema``."""
    if schema is None and spec in BUNDLED:
        return load_bundled(spec)
    if schema is None and ":" in spec and not Path(spec).exists():
        spec, schema = spec.rsplit(":", 1)
    if schema is None:
        schema = Path(spec).with_suffix(".schema")
    return load_csv(spec, schema)


def min_max_params(features: np.ndarray, mask: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-column (offset, scale) so that ``(x - offset) * scale`` lies in [0, 1].

    Constant columns get scale 0 (they map to 0); columns outside ``mask`` keep offset 0, scale 1.
    """
    lo = features.min(axis=0)
    span = features.max(axis=0) - lo
    scale = np.where(span > 0, 1.0 / np.where(span > 0, span, 1.0), 0.0)
    if mask is not None:
        lo = np.where(mask, lo, 0.0)
        scale = np.where(mask, scale, 1.0)
    return lo, scale


def min_max_apply(features: np.ndarray, params) -> np.ndarray:
    lo, scale = params
    return (features - lo) * scale


def min_max_normalize(d: Dataset) -> Dataset:
    """Map every numeric column to [0, 1]; one-hot columns are left alone."""
    params = min_max_params(d.features, d.numeric_mask)
    out = min_max_apply(d.features, params)
    # pin the extremes exactly so that normalizing twice is a no-op
    for j in np.flatnonzero(d.numeric_mask):
        col = d.features[:, j]
        if col.max() > col.min():
            out[col == col.min(), j] = 0.0
            out[col == col.max(), j] = 1.0
    return d.with_features(out)


def affine_transform(d: Dataset, t: AffineTransform) -> Dataset:
    if t.dim != d.n_features:
        raise ShapeError(f"transform acts on dimension {t.dim}, dataset has {d.n_features} features")
    return d.with_features(t.apply(d.features))


def scale_feature(dim: int, feature: int, factor: float) -> AffineTransform:
    m = np.eye(dim)
    m[feature, feature] = factor
    return AffineTransform(m, np.zeros(dim))


@dataclass(frozen=True)
class FoldSplit:
    n_folds: int
    test_folds: tuple[np.ndarray, ...]

    @property
    def n_samples(self) -> int:
        return sum(len(f) for f in self.test_folds)

    def train_indices(self, fold: int) -> np.ndarray:
        others = [f for i, f in enumerate(self.test_folds) if i != fold]
        return np.sort(np.concatenate(others))

    def __iter__(self):
        for i, test in enumerate(self.test_folds):
            yield self.train_indices(i), test


def stratified_kfold(labels, n_folds: int, rng: Rng) -> FoldSplit:
    """Stratified K-fold split.

    Each class is shuffled and its members dealt to folds in turn, continuing
    the deal where the previous class stopped, so fold sizes differ by at most
    one and every fold holds floor or ceil of (class size / K) of each class.
    """
    labels = np.asarray(getattr(labels, "labels", labels))
    n = len(labels)
    if n_folds < 2:
        raise ValueError(f"need at least 2 folds, got {n_folds}")
    if n_folds > n:
        raise ValueError(f"cannot split {n} samples into {n_folds} folds")
    dealt = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        dealt.extend(rng.shuffle(members.tolist()))
    start = int(rng.generator.integers(n_folds))
    assignment = (np.arange(n) + start) % n_folds
    dealt = np.array(dealt, dtype=np.intp)
    folds = tuple(np.sort(dealt[assignment == k]) for k in range(n_folds))
    return FoldSplit(n_folds, folds)


def stratified_holdout(labels, fraction: float, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    """Split positions into (keep, held_out) with about ``fraction`` of each class held out."""
    labels = np.asarray(labels)
    keep, held = [], []
    for c in np.unique(labels):
        members = rng.shuffle(np.flatnonzero(labels == c).tolist())
        n_out = int(round(fraction * len(members)))
        if len(members) > 1:
            n_out = min(max(n_out, 1), len(members) - 1)
        else:
            n_out = 0
        held.extend(members[:n_out])
        keep.extend(members[n_out:])
    return np.sort(np.array(keep, dtype=np.intp)), np.sort(np.array(held, dtype=np.intp))


# Binary example where one categorical feature is coded on one bit (X1) or two bits (X2).
X1 = np.array(
    [
        [0, 0, 0, 1],
        [0, 0, 1, 0],
        [0, 1, 0, 0],
        [1, 0, 0, 1],
        [1, 0, 1, 0],
    ],
    dtype=np.float64,
)
X1_QUERY = np.array([1, 1, 0, 0], dtype=np.float64)
X2 = np.array(
    [
        [1, 0, 0, 0, 1],
        [1, 0, 0, 1, 0],
        [1, 0, 1, 0, 0],
        [0, 1, 0, 0, 1],
        [0, 1, 0, 1, 0],
    ],
    dtype=np.float64,
)
X2_QUERY = np.array([0, 1, 1, 0, 0], dtype=np.float64)

SQUARE = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=np.float64)
