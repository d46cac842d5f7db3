"""Graph-KAN classifier over a fixed feature graph.

Each sample is a signal on the graph: feature ``p`` is the value of node
``p``.  A graph layer

1. averages (or sums) every node's channels over its closed neighborhood,
2. passes each node's aggregated channels through that node's own bank of
   univariate functions, summing over input channels,
3. applies batch norm (one set of statistics per channel, pooled over
   samples and nodes) and dropout.

After the graph layers the node channels are mean-pooled into one vector per
sample and fed through KAN head layers (batch norm + dropout between them)
ending in a softmax.  With ``graph_layers=0`` the head reads the raw
feature vector directly, i.e. the model is a plain KAN.

Per-node banks are stored as one :class:`~mogkan.kan.KanLayer` of input size
``num_nodes * channels`` whose edge outputs are summed per node instead of
over all inputs; ``first_layer.base_weights[q, p]`` is thus the weight of
feature ``p`` in output channel ``q``.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import MogkanError
from .graph import Graph, aggregate, aggregate_transpose
from .kan import (
    BatchNormState,
    KanLayer,
    batch_norm_backward,
    batch_norm_forward,
    batch_norm_init,
    dropout_mask,
    kan_layer_backward,
    kan_layer_edges,
    kan_layer_init,
    softmax,
    softmax_cross_entropy,
)
from .spline import SplineGrid, make_grid

__all__ = [
    "ModelConfig",
    "Model",
    "init_model",
    "forward",
    "predict",
    "loss",
    "loss_and_gradients",
    "save_checkpoint",
    "load_checkpoint",
    "checkpoint_to_json",
]


@dataclass
class ModelConfig:
    num_features: int
    num_classes: int
    channels_per_node: int = 1
    graph_layers: int = 2
    hidden_width: int | None = None  # default 2 * channels_per_node + 1
    head_widths: list[int] | None = None  # default [2 * hidden_width + 1]
    grid_range: tuple[float, float] = (-3.0, 3.0)
    grid_intervals: int = 5
    grid_degree: int = 3
    dropout_rate: float = 0.1
    aggregation: str = "mean"
    seed: int = 0

    def __post_init__(self):
        self.grid_range = tuple(float(v) for v in self.grid_range)
        if self.hidden_width is None:
            self.hidden_width = 2 * self.channels_per_node + 1
        if self.head_widths is None:
            self.head_widths = [2 * self.hidden_width + 1]
        self.head_widths = [int(w) for w in self.head_widths]
        for name in ("num_features", "num_classes", "channels_per_node", "hidden_width"):
            if int(getattr(self, name)) < 1:
                raise MogkanError("invalid-config", f"{name} must be >= 1")
        if any(w < 1 for w in self.head_widths):
            raise MogkanError("invalid-config", "head widths must be >= 1")
        if self.graph_layers < 0:
            raise MogkanError("invalid-config", "graph_layers must be >= 0")
        if self.num_features % self.channels_per_node:
            raise MogkanError("invalid-config", "num_features must be a multiple of channels_per_node")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise MogkanError("invalid-rate", f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.aggregation not in ("mean", "sum"):
            raise MogkanError("invalid-config", f"aggregation must be 'mean' or 'sum', got {self.aggregation!r}")

    @property
    def num_nodes(self) -> int:
        return self.num_features // self.channels_per_node

    def grid(self) -> SplineGrid:
        return make_grid(self.grid_range[0], self.grid_range[1], self.grid_intervals, self.grid_degree)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid_range"] = list(self.grid_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class Model:
    config: ModelConfig
    graph: Graph
    graph_kans: list[KanLayer] = field(default_factory=list)
    graph_norms: list[BatchNormState] = field(default_factory=list)
    head_kans: list[KanLayer] = field(default_factory=list)
    head_norms: list[BatchNormState] = field(default_factory=list)
    frozen: bool = False

    @property
    def first_layer(self) -> KanLayer:
        return self.graph_kans[0] if self.graph_kans else self.head_kans[0]

    @property
    def feature_ids(self) -> list[str]:
        c = self.config.channels_per_node
        if c == 1:
            return list(self.graph.node_ids)
        return [f"{nid}#{ch}" for nid in self.graph.node_ids for ch in range(c)]

    def params(self) -> dict[str, np.ndarray]:
        """Every trainable array by name (live references, not copies)."""
        out = {}
        for i, (kan, bn) in enumerate(zip(self.graph_kans, self.graph_norms)):
            out.update({f"graph.{i}.{k}": v for k, v in kan.params().items()})
            out.update({f"graph.{i}.bn.{k}": v for k, v in bn.params().items()})
        for i, kan in enumerate(self.head_kans):
            out.update({f"head.{i}.{k}": v for k, v in kan.params().items()})
        for i, bn in enumerate(self.head_norms):
            out.update({f"head.{i}.bn.{k}": v for k, v in bn.params().items()})
        return out


def init_model(config: ModelConfig, graph: Graph) -> Model:
    if graph.num_nodes != config.num_nodes:
        raise MogkanError("graph-size-mismatch",
                          f"graph has {graph.num_nodes} nodes, config expects {config.num_nodes}")
    if config.graph_layers and not graph.self_loops:
        raise MogkanError("self-loops-missing", "attach features to the graph before building a model")
    grid = config.grid()
    v, h = config.num_nodes, config.hidden_width
    model = Model(config, graph)
    channels = config.channels_per_node
    for layer in range(config.graph_layers):
        model.graph_kans.append(kan_layer_init(v * channels, h, grid, seed=[config.seed, 0, layer]))
        model.graph_norms.append(batch_norm_init(h))
        channels = h
    widths = [h if config.graph_layers else config.num_features] + config.head_widths + [config.num_classes]
    for i in range(len(widths) - 1):
        model.head_kans.append(kan_layer_init(widths[i], widths[i + 1], grid, seed=[config.seed, 1, i]))
        if i < len(widths) - 2:
            model.head_norms.append(batch_norm_init(widths[i + 1]))
    return model


def _dropout_masks(model: Model, shapes: list, seed):
    rate = model.config.dropout_rate
    if seed is None or rate == 0.0:
        return [None] * len(shapes)
    return [dropout_mask(s, rate, [*np.atleast_1d(seed).tolist(), i]) for i, s in enumerate(shapes)]


def _forward(model: Model, features, mode: str, dropout_seed=None, update_stats: bool = False):
    cfg = model.config
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[1] != cfg.num_features:
        raise MogkanError("shape-mismatch", f"expected (B, {cfg.num_features}) features, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise MogkanError("non-finite-input", "features contain NaN or inf")
    if mode not in ("train", "eval"):
        raise MogkanError("invalid-mode", f"mode must be 'train' or 'eval', got {mode!r}")
    train = mode == "train"
    b, v = x.shape[0], cfg.num_nodes
    shapes = [(b, v * cfg.hidden_width)] * cfg.graph_layers + [(b, w) for w in cfg.head_widths]
    masks = _dropout_masks(model, shapes, dropout_seed) if train else [None] * len(shapes)
    caches = []

    h = x.reshape(b, v, cfg.channels_per_node)
    for i, (kan, bn) in enumerate(zip(model.graph_kans, model.graph_norms)):
        c = h.shape[2]
        agg = aggregate(model.graph, h, cfg.aggregation)
        edges, kc = kan_layer_edges(kan, agg.reshape(b, v * c))
        node_out = edges.reshape(b, kan.out_dim, v, c).sum(axis=3)  # (B, H, V)
        # channel statistics are pooled over samples and nodes
        rows = node_out.transpose(0, 2, 1).reshape(b * v, kan.out_dim)
        normed, bc = batch_norm_forward(bn, rows, mode, update=update_stats)
        out = normed.reshape(b, v * kan.out_dim)
        if masks[i] is not None:
            out = out * masks[i]
        caches.append((kc, bc, c))
        h = out.reshape(b, v, kan.out_dim)

    z = h.mean(axis=1) if cfg.graph_layers else x
    head_caches = []
    for i, kan in enumerate(model.head_kans):
        edges, kc = kan_layer_edges(kan, z)
        z = edges.sum(axis=2)
        bc = None
        if i < len(model.head_norms):
            z, bc = batch_norm_forward(model.head_norms[i], z, mode, update=update_stats)
            mask = masks[cfg.graph_layers + i]
            if mask is not None:
                z = z * mask
        head_caches.append((kc, bc))
    return z, {"graph": caches, "head": head_caches, "masks": masks, "batch": b}


def forward(model: Model, features, mode: str = "eval", dropout_seed=None) -> np.ndarray:
    """Class probabilities ``(B, C)``.

    Eval mode is pure.  Train mode uses batch statistics and, when
    ``dropout_seed`` is given, a dropout mask derived from it; running
    statistics are left untouched (only :func:`mogkan.training.train`
    updates them).
    """
    logits, _ = _forward(model, features, mode, dropout_seed)
    return softmax(logits)


def logits(model: Model, features, mode: str = "eval", dropout_seed=None) -> np.ndarray:
    return _forward(model, features, mode, dropout_seed)[0]


def predict(model: Model, features) -> np.ndarray:
    return np.argmax(logits(model, features, "eval"), axis=1)


def loss(model: Model, features, labels, mode: str = "train", dropout_seed=None) -> float:
    """Mean cross-entropy without gradients."""
    return softmax_cross_entropy(_forward(model, features, mode, dropout_seed)[0], labels)[0]


def loss_and_gradients(model: Model, features, labels, mode: str = "train", dropout_seed=None,
                       update_stats: bool = False):
    """Mean cross-entropy and its exact gradient for every trainable array.

    Returns ``(loss, grads)`` with ``grads`` keyed like :meth:`Model.params`.
    """
    cfg = model.config
    z, cache = _forward(model, features, mode, dropout_seed, update_stats)
    loss, _, dz = softmax_cross_entropy(z, labels)
    grads = {}
    masks = cache["masks"]
    for i in reversed(range(len(model.head_kans))):
        kc, bc = cache["head"][i]
        if bc is not None:
            mask = masks[cfg.graph_layers + i]
            if mask is not None:
                dz = dz * mask
            g, dz = batch_norm_backward(model.head_norms[i], bc, dz)
            grads.update({f"head.{i}.bn.{k}": v for k, v in g.items()})
        g, dz = kan_layer_backward(model.head_kans[i], kc, dz)
        grads.update({f"head.{i}.{k}": v for k, v in g.items()})

    if cfg.graph_layers:
        b, v = cache["batch"], cfg.num_nodes
        dh = np.repeat(dz[:, None, :] / v, v, axis=1)  # mean-pool adjoint, (B, V, H)
        for i in reversed(range(cfg.graph_layers)):
            kan, bn = model.graph_kans[i], model.graph_norms[i]
            kc, bc, c = cache["graph"][i]
            dflat = dh.reshape(b, v * kan.out_dim)
            if masks[i] is not None:
                dflat = dflat * masks[i]
            g, dflat = batch_norm_backward(bn, bc, dflat.reshape(b * v, kan.out_dim))
            grads.update({f"graph.{i}.bn.{k}": val for k, val in g.items()})
            dnode = dflat.reshape(b, v, kan.out_dim).transpose(0, 2, 1)  # (B, H, V)
            dedges = np.broadcast_to(dnode[:, :, :, None], (b, kan.out_dim, v, c)).reshape(b, kan.out_dim, v * c)
            g, dagg = kan_layer_backward(kan, kc, dedges)
            grads.update({f"graph.{i}.{k}": val for k, val in g.items()})
            dh = aggregate_transpose(model.graph, dagg.reshape(b, v, c), cfg.aggregation)
    return loss, grads


def _array(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [float(x) for x in a.ravel()]}


def _unarray(d: dict) -> np.ndarray:
    return np.array(d["data"], dtype=float).reshape(d["shape"])


def _kan_dict(kan: KanLayer) -> dict:
    return {"in_dim": kan.in_dim, "out_dim": kan.out_dim, "grid": kan.grid.to_dict(),
            **{k: _array(v) for k, v in kan.params().items()}}


def _kan_undict(d: dict) -> KanLayer:
    return KanLayer(d["in_dim"], d["out_dim"], SplineGrid.from_dict(d["grid"]),
                    _unarray(d["base_weights"]), _unarray(d["spline_weights"]), _unarray(d["coeffs"]))


def _bn_dict(bn: BatchNormState) -> dict:
    return {"dim": bn.dim, "momentum": bn.momentum, "epsilon": bn.epsilon,
            **{k: _array(getattr(bn, k)) for k in ("gamma", "beta", "running_mean", "running_var")}}


def _bn_undict(d: dict) -> BatchNormState:
    return BatchNormState(d["dim"], *(_unarray(d[k]) for k in ("gamma", "beta", "running_mean", "running_var")),
                          momentum=d["momentum"], epsilon=d["epsilon"])


def checkpoint_to_json(model: Model, extra: dict | None = None) -> str:
    doc = {
        "format": "mogkan-checkpoint/1",
        "config": model.config.to_dict(),
        "graph": model.graph.to_dict(),
        "graph_layers": [{"kan": _kan_dict(k), "bn": _bn_dict(b)}
                         for k, b in zip(model.graph_kans, model.graph_norms)],
        "head_layers": [_kan_dict(k) for k in model.head_kans],
        "head_norms": [_bn_dict(b) for b in model.head_norms],
    }
    if extra:
        doc["extra"] = extra
    return json.dumps(doc, indent=1)


def save_checkpoint(model: Model, path, extra: dict | None = None) -> None:
    """Write the checkpoint atomically (temp file + rename)."""
    text = checkpoint_to_json(model, extra)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def model_from_dict(doc: dict) -> Model:
    config = ModelConfig.from_dict(doc["config"])
    model = Model(config, Graph.from_dict(doc["graph"]))
    for layer in doc["graph_layers"]:
        model.graph_kans.append(_kan_undict(layer["kan"]))
        model.graph_norms.append(_bn_undict(layer["bn"]))
    model.head_kans = [_kan_undict(d) for d in doc["head_layers"]]
    model.head_norms = [_bn_undict(d) for d in doc["head_norms"]]
    return model


def load_checkpoint(path) -> Model:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
