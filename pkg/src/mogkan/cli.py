"""``mogkan`` command line.

Exit codes: 0 success, 1 runtime failure (bad input file, I/O), 2 usage or
configuration error.  Every command writes fixed file names under ``--out``.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path


from .data import encode_labels, integrate, read_labels, read_matrix, save_labels, save_matrix, synthesize, \
    synthetic_interactions
from .errors import MogkanError
from .graph import attach_features, build_graph, degree_filter, isolated_graph, parse_mapping, read_interactions, \
    Graph
from .importance import feature_importance, map_importance_to_genes, read_gene_mapping, write_importance_tsv
from .metrics import CVSummary, MetricsReport, format_table
from .model import ModelConfig, init_model, load_checkpoint, save_checkpoint
from .selection import lasso_select_multiclass, standardize, welch_filter
from .training import TrainSettings, cross_validate, train

log = logging.getLogger("mogkan")


class UsageError(Exception):
    """Invalid flags or configuration values (exit code 2)."""


def write_atomic(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _matrix_text(matrix) -> str:
    buf = io.StringIO()
    save_matrix(matrix, buf)
    return buf.getvalue()


def _labels_text(matrix) -> str:
    buf = io.StringIO()
    save_labels(matrix, buf)
    return buf.getvalue()


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _log_run(out: Path, command: str, message: str) -> None:
    stamp = time.strftime("%Y-%m-%dT%H:%M:%S")
    with open(out / "run.log", "a", encoding="utf-8") as fh:
        fh.write(f"{stamp}\t{command}\t{message}\n")


# --- configuration -------------------------------------------------------------

DEFAULTS = {
    "data": {"matrix": None, "labels": None, "prefixes": None},
    "selection": {"p_threshold": 0.001, "lambda": None, "tol": 1e-8},
    "graph": {"interactions": None, "mapping": None, "min_score": 0, "min_degree": 200},
    "model": {},
    "train": {"epochs": 100, "lr": 1e-2, "weight_decay": 1e-4, "batch_size": 32, "folds": 5, "seed": 0},
    "output": {"directory": "."},
}

MODEL_KEYS = {"channels_per_node", "graph_layers", "hidden_width", "head_widths", "grid_range",
              "grid_intervals", "grid_degree", "dropout_rate", "aggregation", "seed"}


def load_run_config(path) -> dict:
    """Read a run config and resolve its paths relative to the file."""
    cfg = json.loads(json.dumps(DEFAULTS))
    if path is None:
        return cfg
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config is not valid JSON: {exc}") from None
    for section, values in doc.items():
        if section not in cfg or not isinstance(values, dict):
            raise UsageError(f"unknown config section {section!r}")
        cfg[section].update(values)
    unknown = set(cfg["model"]) - MODEL_KEYS
    if unknown:
        raise UsageError(f"unknown model settings: {sorted(unknown)}")
    base = path.parent

    def resolve(p):
        if p is None:
            return None
        if isinstance(p, list):
            return [resolve(x) for x in p]
        return str(p if Path(p).is_absolute() else base / p)

    for section, key in (("data", "matrix"), ("data", "labels"), ("graph", "interactions"), ("graph", "mapping")):
        cfg[section][key] = resolve(cfg[section][key])
    if doc.get("output", {}).get("directory") is not None:
        cfg["output"]["directory"] = resolve(cfg["output"]["directory"])
    return cfg


def _override(cfg: dict, args, pairs) -> None:
    for attr, section, key in pairs:
        val = getattr(args, attr, None)
        if val is not None:
            cfg[section][key] = val


RUN_FLAGS = [
    ("matrix", "data", "matrix"), ("labels", "data", "labels"), ("prefix", "data", "prefixes"),
    ("interactions", "graph", "interactions"), ("mapping", "graph", "mapping"),
    ("min_score", "graph", "min_score"), ("min_degree", "graph", "min_degree"),
    ("epochs", "train", "epochs"), ("lr", "train", "lr"), ("weight_decay", "train", "weight_decay"),
    ("batch_size", "train", "batch_size"), ("folds", "train", "folds"), ("seed", "train", "seed"),
    ("graph_layers", "model", "graph_layers"), ("hidden_width", "model", "hidden_width"),
    ("dropout", "model", "dropout_rate"), ("aggregation", "model", "aggregation"),
    ("out", "output", "directory"),
]


def _load_dataset(cfg: dict):
    data = cfg["data"]
    if not data["matrix"]:
        raise UsageError("no input matrix (use --matrix or data.matrix in the config)")
    if not data["labels"]:
        raise UsageError("no label file (use --labels or data.labels in the config)")
    paths = data["matrix"] if isinstance(data["matrix"], list) else [data["matrix"]]
    if len(paths) == 1:
        matrix = read_matrix(paths[0])
    else:
        prefixes = data["prefixes"] or [f"m{i + 1}" for i in range(len(paths))]
        if len(prefixes) != len(paths):
            raise UsageError("one prefix per matrix is required")
        matrix = integrate([read_matrix(p) for p in paths], prefixes)
    labels = read_labels(data["labels"])
    missing = [s for s in matrix.sample_ids if s not in labels]
    if missing:
        raise MogkanError("missing-label", f"{len(missing)} samples lack labels, e.g. {missing[0]!r}")
    return matrix.with_labels(labels)


def _feature_graph(cfg: dict, feature_ids: list[str]) -> Graph:
    g = cfg["graph"]
    if not g["interactions"]:
        return isolated_graph(feature_ids)
    base = build_graph(read_interactions(g["interactions"]), int(g["min_score"]))
    base = degree_filter(base, int(g["min_degree"]))
    mapping = None
    if g["mapping"]:
        with open(g["mapping"], encoding="utf-8", newline="") as fh:
            mapping = parse_mapping(fh)
    graph, _ = attach_features(base, feature_ids, mapping)
    return graph


def _model_config(cfg: dict, num_features: int, num_classes: int) -> ModelConfig:
    try:
        return ModelConfig(num_features=num_features, num_classes=num_classes, **cfg["model"])
    except MogkanError as exc:
        raise UsageError(str(exc)) from None


def _train_settings(cfg: dict) -> TrainSettings:
    t = cfg["train"]
    if int(t["epochs"]) < 0 or int(t["batch_size"]) < 2 or float(t["lr"]) <= 0:
        raise UsageError("need epochs >= 0, batch_size >= 2 and lr > 0")
    return TrainSettings(int(t["epochs"]), float(t["lr"]), float(t["weight_decay"]),
                         int(t["batch_size"]), int(t["seed"]))


# --- commands ------------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.samples < 1 or args.features < 1 or args.classes < 1:
        raise UsageError("--samples, --features and --classes must be >= 1")
    if not 0 <= args.informative <= args.features:
        raise UsageError(f"--informative must lie in [0, --features={args.features}]")
    if not 0.0 <= args.density <= 1.0 or args.noise < 0:
        raise UsageError("--density must lie in [0, 1] and --noise must be >= 0")
    matrix, graph, informative = synthesize(args.samples, args.features, args.classes, args.informative,
                                            args.density, args.noise, args.seed)
    out = _out_dir(args)
    rows = synthetic_interactions(graph, args.seed)
    tsv = "protein1\tprotein2\tcombined_score\n" + "".join(
        f"{r.node_a}\t{r.node_b}\t{r.combined_score}\n" for r in rows)
    write_atomic(out / "matrix.csv", _matrix_text(matrix))
    write_atomic(out / "labels.csv", _labels_text(matrix))
    write_atomic(out / "interactions.tsv", tsv)
    write_atomic(out / "truth.txt", "".join(matrix.feature_ids[i] + "\n" for i in informative))
    print(f"wrote {args.samples} x {args.features} matrix, {len(rows)} interactions, "
          f"{len(informative)} planted features to {out}")
    return 0


def _group_codes(matrix, positive):
    classes, y = encode_labels(matrix)
    if positive is not None:
        if positive not in classes:
            raise UsageError(f"--positive {positive!r} is not a label in the data")
        return [(y == classes.index(positive)).astype(int)]
    if len(classes) == 2:
        return [y]
    return [(y == c).astype(int) for c in range(len(classes))]


def cmd_filter(args) -> int:
    cfg = load_run_config(args.config)
    _override(cfg, args, [("matrix", "data", "matrix"), ("labels", "data", "labels"),
                          ("p_threshold", "selection", "p_threshold"), ("out", "output", "directory")])
    matrix = _load_dataset(cfg)
    keep: set[int] = set()
    for groups in _group_codes(matrix, args.positive):
        keep.update(welch_filter(matrix.values, groups, float(cfg["selection"]["p_threshold"])))
    idx = sorted(keep)
    args.out = cfg["output"]["directory"]
    out = _out_dir(args)
    write_atomic(out / "selected.txt", "".join(matrix.feature_ids[i] + "\n" for i in idx))
    write_atomic(out / "filtered.csv", _matrix_text(matrix.select_features(idx)))
    if not idx:
        print("warning: no feature passed the filter", file=sys.stderr)
    print(f"kept {len(idx)} of {len(matrix.feature_ids)} features")
    return 0


def cmd_select(args) -> int:
    cfg = load_run_config(args.config)
    _override(cfg, args, [("matrix", "data", "matrix"), ("labels", "data", "labels"),
                          ("lam", "selection", "lambda"), ("tol", "selection", "tol"),
                          ("out", "output", "directory")])
    lam = cfg["selection"]["lambda"]
    if lam is None or float(lam) < 0:
        raise UsageError("--lambda must be given and >= 0")
    if float(cfg["selection"]["tol"]) <= 0:
        raise UsageError("--tol must be > 0")
    matrix = _load_dataset(cfg)
    _, y = encode_labels(matrix)
    X, _, _ = standardize(matrix.values)
    idx = lasso_select_multiclass(X, y, float(lam), tol=float(cfg["selection"]["tol"]))
    args.out = cfg["output"]["directory"]
    out = _out_dir(args)
    write_atomic(out / "selected.txt", "".join(matrix.feature_ids[i] + "\n" for i in idx))
    write_atomic(out / "selected.csv", _matrix_text(matrix.select_features(idx)))
    if not idx:
        print("warning: lambda removed every feature; selection is empty", file=sys.stderr)
    print(f"selected {len(idx)} of {len(matrix.feature_ids)} features")
    return 0


def cmd_integrate(args) -> int:
    if len(args.matrix) != len(args.prefix):
        raise UsageError("give one --prefix per --matrix")
    if len(set(args.prefix)) != len(args.prefix):
        raise UsageError("prefixes must be unique")
    matrices = [read_matrix(p) for p in args.matrix]
    merged = integrate(matrices, args.prefix)
    out = _out_dir(args)
    write_atomic(out / "integrated.csv", _matrix_text(merged))
    if args.labels:
        merged = merged.with_labels(read_labels(args.labels))
        write_atomic(out / "labels.csv", _labels_text(merged))
    print(f"integrated {len(merged.sample_ids)} samples x {len(merged.feature_ids)} features")
    return 0


def cmd_build_graph(args) -> int:
    cfg = load_run_config(args.config)
    _override(cfg, args, [("interactions", "graph", "interactions"), ("mapping", "graph", "mapping"),
                          ("min_score", "graph", "min_score"), ("min_degree", "graph", "min_degree"),
                          ("matrix", "data", "matrix"), ("out", "output", "directory")])
    if not cfg["graph"]["interactions"]:
        raise UsageError("--interactions is required")
    if int(cfg["graph"]["min_degree"]) < 0:
        raise UsageError("--min-degree must be >= 0")
    args.out = cfg["output"]["directory"]
    out = _out_dir(args)
    if cfg["data"]["matrix"]:
        path = cfg["data"]["matrix"]
        matrix = read_matrix(path if isinstance(path, str) else path[0])
        graph = _feature_graph(cfg, matrix.feature_ids)
    else:
        base = build_graph(read_interactions(cfg["graph"]["interactions"]), int(cfg["graph"]["min_score"]))
        graph = degree_filter(base, int(cfg["graph"]["min_degree"]))
    write_atomic(out / "graph.json", json.dumps(graph.to_dict(), indent=1))
    print(f"graph: {graph.num_nodes} nodes, {len(graph.edges)} edges")
    return 0


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    _override(cfg, args, RUN_FLAGS)
    matrix = _load_dataset(cfg)
    classes, y = encode_labels(matrix)
    settings = _train_settings(cfg)
    graph = _feature_graph(cfg, matrix.feature_ids)
    config = _model_config(cfg, len(matrix.feature_ids), len(classes))
    X, mean, std = standardize(matrix.values)
    model = init_model(config, graph)
    _, trace = train(model, X, y, settings.epochs, settings.learning_rate, settings.weight_decay,
                     settings.batch_size, settings.seed)
    args.out = cfg["output"]["directory"]
    out = _out_dir(args)
    extra = {"classes": classes, "standardization": {"mean": mean.tolist(), "std": std.tolist()}}
    save_checkpoint(model, out / "model.json", extra)
    write_atomic(out / "trace.json", json.dumps({"loss": trace}, indent=1))
    _log_run(out, "train", f"{len(y)} samples, {settings.epochs} epochs")
    if trace:
        print(f"trained {settings.epochs} epochs: loss {trace[0]:.4f} -> {trace[-1]:.4f}")
    return 0


def cmd_cv(args) -> int:
    cfg = load_run_config(args.config)
    _override(cfg, args, RUN_FLAGS)
    folds = int(cfg["train"]["folds"])
    if folds < 2:
        raise UsageError(f"cross-validation needs --folds >= 2, got {folds}")
    matrix = _load_dataset(cfg)
    classes, y = encode_labels(matrix)
    settings = _train_settings(cfg)
    graph = _feature_graph(cfg, matrix.feature_ids)
    config = _model_config(cfg, len(matrix.feature_ids), len(classes))
    workers = int(os.environ.get("MOGKAN_THREADS", "1") or 1)
    result = cross_validate(matrix.values, y, graph, config, settings, folds, settings.seed, workers)
    args.out = cfg["output"]["directory"]
    out = _out_dir(args)
    doc = result.summary.to_dict()
    doc["classes"] = classes
    doc["config"] = {"model": config.to_dict(), "train": vars(settings) | {"folds": folds}}
    write_atomic(out / "metrics.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    write_atomic(out / "summary.tsv", format_table({args.name: result.summary}))
    for fr in result.folds:
        extra = {"classes": classes, "fold": fr.fold,
                 "standardization": {"mean": fr.mean.tolist(), "std": fr.std.tolist()}}
        save_checkpoint(fr.model, out / f"fold{fr.fold}.json", extra)
    _log_run(out, "cv", f"{folds} folds, accuracy {result.summary.mean['accuracy']:.4f}")
    print(format_table({args.name: result.summary}), end="")
    return 0


def cmd_importance(args) -> int:
    if args.top_k is not None and args.top_k < 1:
        raise UsageError("--top-k must be >= 1")
    model = load_checkpoint(args.checkpoint)
    ranking = feature_importance(model)
    if args.top_k is not None:
        ranking = ranking[:args.top_k]
    mapping = read_gene_mapping(args.mapping) if args.mapping else {}
    rows = map_importance_to_genes(ranking, mapping)
    out = _out_dir(args)
    buf = io.StringIO()
    write_importance_tsv(rows, buf)
    write_atomic(out / "importance.tsv", buf.getvalue())
    print(f"wrote {len(rows)} ranked features to {out / 'importance.tsv'}")
    return 0


def cmd_report(args) -> int:
    rows = {}
    for path in args.metrics:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        per_fold = [MetricsReport(**r) for r in doc["per_fold"]]
        s = doc["summary"]
        summary = CVSummary(per_fold, {m: s[m]["mean"] for m in s}, {m: s[m]["std"] for m in s},
                            doc.get("flags", []))
        rows[Path(path).parent.name or path] = summary
    text = format_table(rows)
    if args.out:
        out = _out_dir(args)
        write_atomic(out / "report.tsv", text)
    print(text, end="")
    return 0


# --- parser --------------------------------------------------------------------

def _run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="run config JSON (flags override it)")
    p.add_argument("--matrix", action="append", help="matrix CSV; repeat to inner-join several")
    p.add_argument("--prefix", action="append", help="feature-id prefix per --matrix")
    p.add_argument("--labels", help="label CSV (sample_id,label)")
    p.add_argument("--interactions", help="interaction TSV (protein1, protein2, combined_score)")
    p.add_argument("--mapping", help="feature -> protein TSV (feature_id, protein_id)")
    p.add_argument("--min-score", type=int)
    p.add_argument("--min-degree", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--graph-layers", type=int)
    p.add_argument("--hidden-width", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--aggregation", choices=["mean", "sum"])
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mogkan", description="Graph-KAN multi-omics classification")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a planted-signal dataset")
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--features", type=int, required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--informative", type=int, default=0)
    p.add_argument("--density", type=float, default=0.3, help="edge probability among informative features")
    p.add_argument("--noise", type=float, default=0.5, help="within-class std of informative features")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("filter", help="Welch t-test filter")
    p.add_argument("--config")
    p.add_argument("--matrix")
    p.add_argument("--labels")
    p.add_argument("--p-threshold", type=float)
    p.add_argument("--positive", help="label tested against all others (default: one-vs-rest union)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("select", help="LASSO feature selection (one-vs-rest union)")
    p.add_argument("--config")
    p.add_argument("--matrix")
    p.add_argument("--labels")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("integrate", help="inner-join matrices on sample id")
    p.add_argument("--matrix", action="append", required=True)
    p.add_argument("--prefix", action="append", required=True)
    p.add_argument("--labels")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_integrate)

    p = sub.add_parser("build-graph", help="score/degree-filter an interaction table")
    p.add_argument("--config")
    p.add_argument("--interactions")
    p.add_argument("--mapping")
    p.add_argument("--matrix", help="attach this matrix's features to the graph")
    p.add_argument("--min-score", type=int)
    p.add_argument("--min-degree", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("train", help="train one model on all samples")
    _run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="stratified k-fold cross-validation")
    _run_flags(p)
    p.add_argument("--name", default="run", help="row label in the summary table")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("importance", help="rank features by first-layer weights")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mapping", help="feature_id / gene_name [/ gene_stable_id] TSV")
    p.add_argument("--top-k", type=int)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("report", help="tabulate metrics.json files")
    p.add_argument("metrics", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "matrix", None) and isinstance(args.matrix, list) and args.command in ("train", "cv"):
        args.matrix = args.matrix[0] if len(args.matrix) == 1 else args.matrix
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mogkan {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (MogkanError, OSError, ValueError, KeyError) as exc:
        print(f"mogkan {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
