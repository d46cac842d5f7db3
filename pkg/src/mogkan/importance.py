"""First-layer feature importance and gene annotation of the ranking."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ParseError
from .model import Model

__all__ = [
    "feature_scores",
    "feature_importance",
    "ImportanceRow",
    "parse_gene_mapping",
    "read_gene_mapping",
    "map_importance_to_genes",
    "write_importance_tsv",
]


def feature_scores(model: Model) -> np.ndarray:
    """``sum_q |base[q,p]| + |spline_w[q,p]| * sum_j |coeffs[q,p,j]|`` over the first layer."""
    layer = model.first_layer
    return (np.abs(layer.base_weights)
            + np.abs(layer.spline_weights) * np.abs(layer.coeffs).sum(axis=2)).sum(axis=0)


def feature_importance(model: Model) -> list[tuple[str, float]]:
    """Features ranked by descending score; equal scores keep feature order."""
    scores = feature_scores(model)
    ids = model.feature_ids
    order = sorted(range(len(scores)), key=lambda p: (-scores[p], p))
    return [(ids[p], float(scores[p])) for p in order]


@dataclass
class ImportanceRow:
    feature_id: str
    gene_stable_id: str
    gene_name: str
    score: float


def parse_gene_mapping(stream) -> dict[str, tuple[str, str]]:
    """TSV with header ``feature_id, gene_name`` and optional ``gene_stable_id``.

    Returns ``feature_id -> (gene_stable_id, gene_name)``.
    """
    text = stream.read() if hasattr(stream, "read") else str(stream)
    if "\r" in text:
        raise ParseError("malformed-mapping-file", "CRLF line endings are not accepted")
    rows = list(csv.reader(text.splitlines(), delimiter="\t"))
    if not rows:
        return {}
    header = rows[0]
    if "feature_id" not in header or "gene_name" not in header:
        raise ParseError("malformed-mapping-file", "header needs feature_id and gene_name", line=1)
    fi, gi = header.index("feature_id"), header.index("gene_name")
    si = header.index("gene_stable_id") if "gene_stable_id" in header else None
    out = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError("malformed-mapping-file", f"expected {len(header)} fields, got {len(row)}", line=lineno)
        if row[fi] in out:
            raise ParseError("malformed-mapping-file", f"feature {row[fi]!r} mapped twice", line=lineno)
        out[row[fi]] = (row[si] if si is not None else "", row[gi])
    return out


def read_gene_mapping(path) -> dict[str, tuple[str, str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_gene_mapping(fh)


def map_importance_to_genes(ranking, mapping: dict[str, tuple[str, str]]) -> list[ImportanceRow]:
    """Annotate every ranked feature; features absent from ``mapping`` get ``"unmapped"``."""
    rows = []
    for fid, score in ranking:
        stable, name = mapping.get(fid, ("unmapped", "unmapped"))
        rows.append(ImportanceRow(fid, stable or "unmapped", name, float(score)))
    return rows


def write_importance_tsv(rows: list[ImportanceRow], stream) -> None:
    """Columns ``feature_id, gene_name, score``; scores to 6 significant digits."""
    stream.write("feature_id\tgene_name\tscore\n")
    for r in rows:
        stream.write(f"{r.feature_id}\t{r.gene_name}\t{r.score:.6g}\n")
