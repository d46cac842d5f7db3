"""Omics matrices: CSV I/O, inner-join integration, labels, folds, synthetic data."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import MogkanError, ParseError
from .graph import Graph, Interaction

__all__ = [
    "OmicsMatrix",
    "FoldPlan",
    "load_matrix",
    "read_matrix",
    "save_matrix",
    "load_labels",
    "read_labels",
    "save_labels",
    "integrate",
    "encode_labels",
    "stratified_kfold",
    "synthesize",
    "synthetic_interactions",
]


@dataclass
class OmicsMatrix:
    sample_ids: list[str]
    feature_ids: list[str]
    values: np.ndarray
    labels: list[str | None] | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.sample_ids), len(self.feature_ids))
        if len(set(self.sample_ids)) != len(self.sample_ids):
            raise MogkanError("duplicate-sample-id", "sample ids must be unique")
        if len(set(self.feature_ids)) != len(self.feature_ids):
            raise MogkanError("duplicate-feature-id", "feature ids must be unique")
        if self.labels is not None and len(self.labels) != len(self.sample_ids):
            raise MogkanError("shape-mismatch", "one label per sample is required")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def with_labels(self, labels: dict[str, str]) -> "OmicsMatrix":
        return OmicsMatrix(self.sample_ids, self.feature_ids, self.values,
                           [labels.get(s) for s in self.sample_ids])

    def select_features(self, indices) -> "OmicsMatrix":
        idx = [int(i) for i in indices]
        return OmicsMatrix(self.sample_ids, [self.feature_ids[i] for i in idx], self.values[:, idx], self.labels)

    def select_samples(self, indices) -> "OmicsMatrix":
        idx = [int(i) for i in indices]
        labels = None if self.labels is None else [self.labels[i] for i in idx]
        return OmicsMatrix([self.sample_ids[i] for i in idx], self.feature_ids, self.values[idx], labels)


@dataclass
class FoldPlan:
    k: int
    assignments: np.ndarray

    def train_test(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        test = np.flatnonzero(self.assignments == fold)
        train = np.flatnonzero(self.assignments != fold)
        return train, test

    def sizes(self) -> list[int]:
        return np.bincount(self.assignments, minlength=self.k).tolist()


def _lines(stream) -> list[str]:
    text = stream.read() if hasattr(stream, "read") else str(stream)
    return text


def load_matrix(stream) -> OmicsMatrix:
    """Parse a CSV whose first header cell is ``sample_id``.

    Cells must parse as finite floats; ``NA``, ``nan`` and ``inf`` are
    rejected with their (row, column) location, counting the header as row 1.
    """
    reader = csv.reader(io.StringIO(_lines(stream)))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("missing-column", "empty matrix file", line=1) from None
    if not header or header[0] != "sample_id":
        raise ParseError("missing-column", "first header cell must be 'sample_id'", line=1)
    features = header[1:]
    seen = set()
    for col, f in enumerate(features, start=2):
        if f in seen:
            raise ParseError("duplicate-feature-id", f"feature {f!r} repeated", line=1, column=col)
        seen.add(f)
    samples, rows, index = [], [], {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError("ragged-row", f"expected {len(header)} cells, got {len(row)}", line=lineno)
        sid = row[0]
        if sid in index:
            raise ParseError("duplicate-sample-id", f"sample {sid!r} already on line {index[sid]}", line=lineno)
        index[sid] = lineno
        vals = []
        for col, cell in enumerate(row[1:], start=2):
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                raise ParseError("non-numeric-cell", f"cell {cell!r} is not a finite number", line=lineno, column=col)
            vals.append(v)
        samples.append(sid)
        rows.append(vals)
    values = np.array(rows, dtype=float).reshape(len(samples), len(features))
    return OmicsMatrix(samples, features, values)


def read_matrix(path, labels_path=None) -> OmicsMatrix:
    with open(path, encoding="utf-8", newline="") as fh:
        m = load_matrix(fh)
    if labels_path is not None:
        m = m.with_labels(read_labels(labels_path))
    return m


def save_matrix(matrix: OmicsMatrix, stream) -> None:
    """Write with 17 significant digits so :func:`load_matrix` round-trips exactly."""
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["sample_id", *matrix.feature_ids])
    for sid, row in zip(matrix.sample_ids, matrix.values):
        w.writerow([sid, *(format(v, ".17g") for v in row)])


def load_labels(stream) -> dict[str, str]:
    reader = csv.reader(io.StringIO(_lines(stream)))
    header = next(reader, None)
    if header is None or header[:2] != ["sample_id", "label"]:
        raise ParseError("missing-column", "label file header must be 'sample_id,label'", line=1)
    out = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise ParseError("ragged-row", f"expected 2 cells, got {len(row)}", line=lineno)
        if row[0] in out:
            raise ParseError("duplicate-sample-id", f"sample {row[0]!r} labeled twice", line=lineno)
        out[row[0]] = row[1]
    return out


def read_labels(path) -> dict[str, str]:
    with open(path, encoding="utf-8", newline="") as fh:
        return load_labels(fh)


def save_labels(matrix: OmicsMatrix, stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["sample_id", "label"])
    for sid, lab in zip(matrix.sample_ids, matrix.labels or []):
        if lab is not None:
            w.writerow([sid, lab])


def integrate(matrices: list[OmicsMatrix], prefixes: list[str]) -> OmicsMatrix:
    """Inner join on sample id; columns become ``prefix:feature_id``.

    Samples keep the first matrix's order.  Where several inputs carry a
    label for the same sample the labels must agree.
    """
    if len(matrices) != len(prefixes):
        raise MogkanError("shape-mismatch", "one prefix per matrix is required")
    if len(set(prefixes)) != len(prefixes):
        raise MogkanError("duplicate-prefix", "prefixes must be unique")
    if not matrices:
        raise MogkanError("empty-input", "nothing to integrate")
    common = set(matrices[0].sample_ids)
    for m in matrices[1:]:
        common &= set(m.sample_ids)
    samples = [s for s in matrices[0].sample_ids if s in common]
    if not samples:
        warnings.warn("inner join left no samples", stacklevel=2)

    blocks, features = [], []
    labels: list[str | None] = [None] * len(samples)
    any_labels = False
    for m, prefix in zip(matrices, prefixes):
        pos = {s: i for i, s in enumerate(m.sample_ids)}
        rows = [pos[s] for s in samples]
        blocks.append(m.values[rows] if rows else np.zeros((0, len(m.feature_ids))))
        features.extend(f"{prefix}:{f}" for f in m.feature_ids)
        if m.labels is None:
            continue
        any_labels = True
        for k, r in enumerate(rows):
            lab = m.labels[r]
            if lab is None:
                continue
            if labels[k] is not None and labels[k] != lab:
                raise MogkanError("label-conflict", f"sample {samples[k]!r}: {labels[k]!r} vs {lab!r}")
            labels[k] = lab
    values = np.hstack(blocks) if blocks else np.zeros((len(samples), 0))
    return OmicsMatrix(samples, features, values, labels if any_labels else None)


def encode_labels(matrix_or_labels) -> tuple[list[str], np.ndarray]:
    """Sorted class names and integer codes."""
    labels = matrix_or_labels.labels if isinstance(matrix_or_labels, OmicsMatrix) else matrix_or_labels
    if labels is None or any(lab is None for lab in labels):
        raise MogkanError("missing-label", "every sample needs a label")
    classes = sorted(set(labels))
    code = {c: i for i, c in enumerate(classes)}
    return classes, np.array([code[lab] for lab in labels], dtype=int)


def stratified_kfold(labels, k: int = 5, seed: int = 0) -> FoldPlan:
    """Shuffle each class by ``seed`` and deal its samples round-robin.

    The dealer position carries over from one class to the next so fold
    totals stay balanced as well as per-class counts.
    """
    labels = np.asarray(labels, dtype=int)
    if k < 2:
        raise MogkanError("invalid-folds", f"need k >= 2, got {k}")
    classes, counts = np.unique(labels, return_counts=True)
    small = classes[counts < k]
    if len(small):
        raise MogkanError("class-too-small", f"classes {small.tolist()} have fewer than {k} samples")
    rng = np.random.default_rng(seed)
    assign = np.empty(len(labels), dtype=int)
    start = 0
    for c in classes:
        members = rng.permutation(np.flatnonzero(labels == c))
        assign[members] = (start + np.arange(len(members))) % k
        start = (start + len(members)) % k
    return FoldPlan(k, assign)


def synthesize(num_samples: int, num_features: int, num_classes: int, num_informative: int,
               graph_density: float = 0.3, noise_std: float = 0.5, seed: int = 0):
    """Planted-signal classification data with a matching feature graph.

    Classes are balanced.  Informative feature ``i`` has class means
    ``pi_i(c) - (C-1)/2`` for a random permutation ``pi_i`` of the classes
    (adjacent classes one unit apart) plus ``noise_std`` Gaussian noise; the
    rest are standard normal.  Graph edges join informative pairs with
    probability ``graph_density`` and any other pair with probability
    ``graph_density / 10``.

    Returns ``(matrix, graph, informative_indices)``.
    """
    if num_samples < 1 or num_features < 1 or num_classes < 1:
        raise MogkanError("invalid-parameter", "samples, features and classes must be >= 1")
    if not 0 <= num_informative <= num_features:
        raise MogkanError("invalid-parameter", "need 0 <= informative <= features")
    if not 0.0 <= graph_density <= 1.0 or noise_std < 0:
        raise MogkanError("invalid-parameter", "graph_density must be in [0, 1] and noise_std >= 0")
    rng = np.random.default_rng(seed)
    y = rng.permutation(np.arange(num_samples) % num_classes)
    informative = np.sort(rng.choice(num_features, size=num_informative, replace=False))
    X = rng.standard_normal((num_samples, num_features))
    for i in informative:
        means = rng.permutation(num_classes) - (num_classes - 1) / 2.0
        X[:, i] = means[y] + noise_std * rng.standard_normal(num_samples)

    width = len(str(max(num_features, num_samples)))
    feature_ids = [f"F{i:0{width}d}" for i in range(num_features)]
    sample_ids = [f"S{i:0{width}d}" for i in range(num_samples)]
    labels = [f"class{c}" for c in y]
    matrix = OmicsMatrix(sample_ids, feature_ids, X, labels)

    is_inf = np.zeros(num_features, dtype=bool)
    is_inf[informative] = True
    iu, ju = np.triu_indices(num_features, k=1)
    prob = np.where(is_inf[iu] & is_inf[ju], graph_density, graph_density / 10.0)
    keep = rng.random(len(iu)) < prob
    edges = set(zip(iu[keep].tolist(), ju[keep].tolist()))
    return matrix, Graph(feature_ids, edges), informative.tolist()


def synthetic_interactions(graph: Graph, seed: int = 0) -> list[Interaction]:
    """Scored interaction rows for a synthetic graph (scores uniform in 400..999)."""
    rng = np.random.default_rng(seed)
    rows = []
    for i, j in sorted(graph.edges):
        rows.append(Interaction(graph.node_ids[i], graph.node_ids[j], int(rng.integers(400, 1000))))
    return rows
