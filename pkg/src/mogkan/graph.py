"""Feature-interaction graphs built from STRING-style interaction tables.

Pipeline: :func:`parse_interactions` -> :func:`build_graph` (score cut) ->
:func:`degree_filter` (hub selection, one pass) -> :func:`attach_features`
(one node per model feature, self-loops added) -> :func:`aggregate`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np
import scipy.sparse as sp

from .errors import MogkanError, ParseError

__all__ = [
    "Interaction",
    "Graph",
    "FeatureNodeMap",
    "parse_interactions",
    "read_interactions",
    "parse_mapping",
    "build_graph",
    "degree_filter",
    "attach_features",
    "aggregate",
    "isolated_graph",
]

INTERACTION_HEADER = ("protein1", "protein2", "combined_score")
MAPPING_HEADER = ("feature_id", "protein_id")


@dataclass(frozen=True)
class Interaction:
    node_a: str
    node_b: str
    combined_score: int


@dataclass
class Graph:
    """Undirected graph over ordered string node ids.

    ``edges`` holds index pairs ``(i, j)`` with ``i < j``; self-loops are not
    stored there but implied for every node when ``self_loops`` is set.
    """

    node_ids: list[str]
    edges: set[tuple[int, int]] = field(default_factory=set)
    self_loops: bool = False

    def __post_init__(self):
        if len(set(self.node_ids)) != len(self.node_ids):
            raise MogkanError("duplicate-node", "node ids must be unique")
        n = len(self.node_ids)
        clean = set()
        for i, j in self.edges:
            if not (0 <= i < n and 0 <= j < n):
                raise MogkanError("invalid-edge", f"edge ({i}, {j}) outside 0..{n - 1}")
            if i == j:
                raise MogkanError("invalid-edge", "self-edges are implied by the self_loops flag")
            clean.add((min(i, j), max(i, j)))
        self.edges = clean
        self._adj = None

    @property
    def num_nodes(self) -> int:
        return len(self.node_ids)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_nodes, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def stored_pairs(self) -> int:
        """Edge count including one self-edge per node when self-loops are on."""
        return len(self.edges) + (self.num_nodes if self.self_loops else 0)

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency, self-loops on the diagonal when set."""
        if self._adj is None:
            n = self.num_nodes
            if self.edges:
                ij = np.array(sorted(self.edges), dtype=int)
                rows = np.concatenate([ij[:, 0], ij[:, 1]])
                cols = np.concatenate([ij[:, 1], ij[:, 0]])
            else:
                rows = cols = np.zeros(0, dtype=int)
            if self.self_loops:
                diag = np.arange(n)
                rows = np.concatenate([rows, diag])
                cols = np.concatenate([cols, diag])
            data = np.ones(len(rows))
            self._adj = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
        return self._adj

    def to_dict(self) -> dict:
        return {
            "node_ids": list(self.node_ids),
            "edges": [list(e) for e in sorted(self.edges)],
            "self_loops": self.self_loops,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Graph":
        return cls(list(d["node_ids"]), {tuple(e) for e in d["edges"]}, bool(d["self_loops"]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "Graph":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class FeatureNodeMap:
    """Which graph protein (if any) each model feature was attached to.

    ``assignments`` maps feature id -> node index in the attached graph; the
    node index of a feature always equals its position in ``feature_ids``.
    """

    feature_ids: list[str]
    assignments: dict[str, int]
    proteins: dict[str, str]

    @property
    def unmapped(self) -> list[str]:
        return [f for f in self.feature_ids if f not in self.proteins]


def _read_tsv(stream: TextIO, required: Iterable[str], what: str):
    text = stream.read() if hasattr(stream, "read") else str(stream)
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("missing-column", f"{what} is empty; expected a header", line=1)
    for lineno, line in enumerate(lines, start=1):
        if line.endswith("\r") or "\r" in line:
            raise ParseError("malformed-row", "carriage return in row (CRLF line endings are rejected)", line=lineno)
    header = lines[0].split("\t")
    cols = {}
    for name in required:
        if name not in header:
            raise ParseError("missing-column", f"{what} header lacks {name!r}", line=1)
        cols[name] = header.index(name)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != len(header):
            raise ParseError("ragged-row", f"expected {len(header)} fields, got {len(parts)}", line=lineno)
        yield lineno, {name: parts[i] for name, i in cols.items()}


def parse_interactions(stream) -> list[Interaction]:
    """Parse a tab-separated interaction table with a
    ``protein1 / protein2 / combined_score`` header (extra columns ignored).
    """
    rows = []
    for lineno, rec in _read_tsv(stream, INTERACTION_HEADER, "interaction table"):
        a, b, raw = rec["protein1"], rec["protein2"], rec["combined_score"]
        try:
            score = int(raw)
        except ValueError:
            raise ParseError("bad-score", f"combined_score {raw!r} is not an integer", line=lineno) from None
        if not 0 <= score <= 1000:
            raise ParseError("bad-score", f"combined_score {score} outside 0..1000", line=lineno)
        if a == b:
            raise ParseError("self-pair", f"interaction of {a!r} with itself", line=lineno)
        rows.append(Interaction(a, b, score))
    return rows


def read_interactions(path) -> list[Interaction]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_interactions(fh)


def parse_mapping(stream, value_column: str = "protein_id") -> dict[str, list[str]]:
    """Read a ``feature_id -> value`` TSV; a feature may appear on several rows."""
    out: dict[str, list[str]] = {}
    for _, rec in _read_tsv(stream, ("feature_id", value_column), "mapping file"):
        targets = out.setdefault(rec["feature_id"], [])
        if rec[value_column] not in targets:
            targets.append(rec[value_column])
    return out


def build_graph(table: Iterable[Interaction], min_score: int = 0) -> Graph:
    """Keep rows with ``combined_score >= min_score``; nodes in first-appearance order."""
    index: dict[str, int] = {}
    edges = set()
    for row in table:
        if row.combined_score < min_score:
            continue
        for node in (row.node_a, row.node_b):
            if node not in index:
                index[node] = len(index)
        i, j = index[row.node_a], index[row.node_b]
        edges.add((min(i, j), max(i, j)))
    return Graph(list(index), edges)


def degree_filter(graph: Graph, min_degree: int = 200) -> Graph:
    """Keep nodes of degree ``>= min_degree`` and the subgraph they induce.

    Degrees are measured once on the input graph; nodes whose degree drops
    below the threshold inside the induced subgraph are kept.
    """
    if graph.self_loops:
        raise MogkanError("self-loops-present", "degree_filter must run before self-loops are added")
    if min_degree <= 0:
        return Graph(list(graph.node_ids), set(graph.edges))
    deg = graph.degrees()
    keep = [i for i in range(graph.num_nodes) if deg[i] >= min_degree]
    remap = {old: new for new, old in enumerate(keep)}
    edges = {(remap[i], remap[j]) for i, j in graph.edges if i in remap and j in remap}
    return Graph([graph.node_ids[i] for i in keep], edges)


def attach_features(graph: Graph, feature_ids: list[str], mapping: dict[str, list[str]] | None = None):
    """Give every model feature its own node and add self-loops.

    A feature is attached to a protein through ``mapping`` (feature id ->
    protein ids) or, when it has no mapping entry, to the graph node of the
    same id if one exists.  Features attached to proteins ``P`` and ``Q`` are
    joined when ``P`` and ``Q`` are adjacent; features sharing one protein are
    joined to each other.  Features with no protein become isolated nodes.

    Returns ``(graph, FeatureNodeMap)`` where the new graph's node ids are the
    feature ids in the given order.
    """
    if len(set(feature_ids)) != len(feature_ids):
        raise MogkanError("duplicate-feature-id", "feature ids must be unique")
    mapping = mapping or {}
    node_index = {nid: i for i, nid in enumerate(graph.node_ids)}
    proteins: dict[str, str] = {}
    for f in feature_ids:
        targets = mapping.get(f)
        if targets:
            present = [t for t in targets if t in node_index]
            if len(set(targets)) > 1:
                raise MogkanError("ambiguous-mapping", f"feature {f!r} maps to {sorted(set(targets))}")
            if present:
                proteins[f] = present[0]
        elif f in node_index:
            proteins[f] = f

    by_protein: dict[int, list[int]] = {}
    for fi, f in enumerate(feature_ids):
        if f in proteins:
            by_protein.setdefault(node_index[proteins[f]], []).append(fi)
    edges = set()
    for members in by_protein.values():
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                edges.add((members[a], members[b]))
    for i, j in graph.edges:
        for fa in by_protein.get(i, ()):
            for fb in by_protein.get(j, ()):
                edges.add((min(fa, fb), max(fa, fb)))
    new = Graph(list(feature_ids), edges, self_loops=True)
    fmap = FeatureNodeMap(list(feature_ids), {f: i for i, f in enumerate(feature_ids)}, proteins)
    return new, fmap


def isolated_graph(feature_ids: list[str]) -> Graph:
    return Graph(list(feature_ids), set(), self_loops=True)


def _operator(graph: Graph, mode: str):
    """Closed-neighborhood sum operator plus the divisor per node (ones in sum mode), cached per graph."""
    if mode not in ("mean", "sum"):
        raise MogkanError("invalid-mode", f"aggregation mode must be 'sum' or 'mean', got {mode!r}")
    cache = graph.__dict__.setdefault("_ops", {})
    if mode not in cache:
        adj = graph.adjacency()
        # small graphs are faster dense
        op = adj.toarray() if graph.num_nodes <= 1024 else adj.tocsr()
        div = np.asarray(adj.sum(axis=1)).ravel() if mode == "mean" else np.ones(graph.num_nodes)
        cache[mode] = (op, div)
    return cache[mode]


def _apply(op, x: np.ndarray) -> np.ndarray:
    b, v = x.shape[:2]
    flat = np.moveaxis(x, 1, 0).reshape(v, -1)
    out = op @ flat
    return np.moveaxis(np.asarray(out).reshape((v, b) + x.shape[2:]), 0, 1)


def _per_node(div: np.ndarray, ndim: int) -> np.ndarray:
    return div.reshape((1, -1) + (1,) * (ndim - 2))


def aggregate(graph: Graph, node_values, mode: str = "mean") -> np.ndarray:
    """Neighborhood sum or mean over ``N(v)`` (which includes ``v``).

    ``node_values`` is ``(B, V)`` or ``(B, V, C)``; aggregation acts on the
    node axis channel by channel.
    """
    if not graph.self_loops:
        raise MogkanError("self-loops-missing", "aggregate needs a graph with self-loops")
    x = np.asarray(node_values, dtype=float)
    if x.ndim not in (2, 3) or x.shape[1] != graph.num_nodes:
        raise MogkanError("shape-mismatch", f"expected (B, {graph.num_nodes}[, C]), got {x.shape}")
    op, div = _operator(graph, mode)
    # dividing after the sum keeps the mean of a constant exact
    return _apply(op, x) / _per_node(div, x.ndim)


def aggregate_transpose(graph: Graph, grad_out, mode: str = "mean") -> np.ndarray:
    """Adjoint of :func:`aggregate` (used for backpropagation)."""
    g = np.asarray(grad_out, dtype=float)
    op, div = _operator(graph, mode)
    return _apply(op.T, g / _per_node(div, g.ndim))
