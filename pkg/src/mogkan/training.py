"""Mini-batch training, stratified cross-validation and grid search."""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .data import stratified_kfold
from .errors import MogkanError
from .graph import Graph
from .kan import adam_init, adam_step
from .metrics import CVSummary, MetricsReport, cv_aggregate, evaluate
from .model import Model, ModelConfig, init_model, loss_and_gradients, predict
from .selection import apply_standardization, standardize

__all__ = [
    "TrainSettings",
    "train",
    "FoldResult",
    "CVResult",
    "cross_validate",
    "grid_search",
]

log = logging.getLogger(__name__)


@dataclass
class TrainSettings:
    epochs: int = 100
    learning_rate: float = 1e-2
    weight_decay: float = 1e-4
    batch_size: int = 32
    seed: int = 0


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    batches = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    # batch norm needs two rows; fold a singleton tail into the previous batch
    if len(batches) > 1 and len(batches[-1]) < 2:
        tail = batches.pop()
        batches[-1] = np.concatenate([batches[-1], tail])
    return batches


def train(model: Model, features, labels, epochs: int = 100, learning_rate: float = 1e-2,
          weight_decay: float = 1e-4, batch_size: int = 32, seed: int = 0):
    """Adam on mean cross-entropy; updates ``model`` in place.

    Returns ``(model, trace)`` where ``trace[e]`` is the sample-weighted mean
    training loss over the mini-batches of epoch ``e`` (train mode, before
    each step).
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int)
    if len(X) == 0:
        raise MogkanError("empty-dataset", "no training samples")
    if len(X) < 2:
        raise MogkanError("empty-dataset", "training needs at least 2 samples (batch norm)")
    if y.min() < 0 or y.max() >= model.config.num_classes:
        raise MogkanError("label-out-of-range", f"labels must lie in [0, {model.config.num_classes})")
    params = model.params()
    state = adam_init(params)
    rng = np.random.default_rng(seed)
    trace = []
    for epoch in range(epochs):
        total = 0.0
        for step, idx in enumerate(_batches(len(X), batch_size, rng)):
            value, grads = loss_and_gradients(model, X[idx], y[idx], "train",
                                              dropout_seed=[seed, epoch, step], update_stats=True)
            adam_step(params, grads, state, learning_rate, weight_decay)
            total += value * len(idx)
        trace.append(total / len(X))
    return model, trace


@dataclass
class FoldResult:
    fold: int
    report: MetricsReport
    model: Model
    trace: list[float]
    mean: np.ndarray
    std: np.ndarray


@dataclass
class CVResult:
    folds: list[FoldResult]
    summary: CVSummary


def _run_fold(args):
    fold, X, y, train_idx, test_idx, graph, config, settings = args
    Xtr, mean, std = standardize(X[train_idx])
    Xte = apply_standardization(X[test_idx], mean, std)
    model = init_model(config, graph)
    _, trace = train(model, Xtr, y[train_idx], settings.epochs, settings.learning_rate,
                     settings.weight_decay, settings.batch_size, seed=settings.seed + fold)
    report = evaluate(y[test_idx], predict(model, Xte), config.num_classes)
    return FoldResult(fold, report, model, trace, mean, std)


def cross_validate(features, labels, graph: Graph, config: ModelConfig, settings: TrainSettings | None = None,
                   folds: int = 5, seed: int = 0, workers: int = 1) -> CVResult:
    """Stratified k-fold CV; standardization is fit on each training split.

    Folds may run in ``workers`` processes; results are ordered by fold index
    so the output does not depend on scheduling.
    """
    settings = settings or TrainSettings()
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int)
    plan = stratified_kfold(y, folds, seed)
    jobs = []
    for k in range(folds):
        tr, te = plan.train_test(k)
        jobs.append((k, X, y, tr, te, graph, config, settings))
    if workers > 1 and folds > 1:
        with ProcessPoolExecutor(max_workers=min(workers, folds)) as pool:
            results = list(pool.map(_run_fold, jobs))
    else:
        results = [_run_fold(j) for j in jobs]
    results.sort(key=lambda r: r.fold)
    for r in results:
        log.info("fold %d: accuracy %.4f macro F1 %.4f", r.fold, r.report.accuracy, r.report.macro_f1)
    return CVResult(results, cv_aggregate([r.report for r in results]))


SEARCH_KEYS = ("learning_rate", "weight_decay", "dropout_rate", "hidden_width", "epochs", "batch_size")
# ties on CV accuracy go to the lexicographically smallest of these
TIE_ORDER = ("weight_decay", "dropout_rate", "hidden_width", "learning_rate", "epochs", "batch_size")


def grid_search(features, labels, graph: Graph, config: ModelConfig, space: dict[str, list],
                settings: TrainSettings | None = None, folds: int = 5, seed: int = 0, workers: int = 1):
    """Exhaustive search over the Cartesian product of ``space``.

    ``space`` maps any of ``learning_rate``, ``weight_decay``,
    ``dropout_rate``, ``hidden_width``, ``epochs``, ``batch_size`` to a list of
    values; unlisted settings come from ``config`` / ``settings``.  Each point
    is scored by mean k-fold accuracy.

    Returns ``(best, table)``: ``best`` is the winning point (dict) and
    ``table`` one row per point with its mean and std accuracy and macro F1.
    """
    settings = settings or TrainSettings()
    unknown = set(space) - set(SEARCH_KEYS)
    if unknown:
        raise MogkanError("invalid-config", f"unsupported search keys: {sorted(unknown)}")
    if not space or any(len(v) == 0 for v in space.values()):
        raise MogkanError("empty-space", "every searched setting needs at least one value")
    keys = list(space)
    table = []
    for values in itertools.product(*(space[k] for k in keys)):
        point = dict(zip(keys, values))
        cfg_kw = {k: point[k] for k in ("dropout_rate", "hidden_width") if k in point}
        if "hidden_width" in cfg_kw:
            cfg_kw["head_widths"] = None if config.head_widths == [2 * config.hidden_width + 1] else config.head_widths
        cfg = replace(config, **cfg_kw)
        st = replace(settings, **{k: point[k] for k in ("learning_rate", "weight_decay", "epochs", "batch_size")
                                  if k in point})
        res = cross_validate(features, labels, graph, cfg, st, folds, seed, workers)
        table.append({
            **point,
            "accuracy_mean": res.summary.mean["accuracy"],
            "accuracy_std": res.summary.std["accuracy"],
            "macro_f1_mean": res.summary.mean["macro_f1"],
        })

    def full(row):
        return tuple(row.get(k, getattr(config, k, getattr(settings, k, 0))) for k in TIE_ORDER)

    best_row = min(table, key=lambda r: (-r["accuracy_mean"], full(r)))
    return {k: best_row[k] for k in keys}, table
