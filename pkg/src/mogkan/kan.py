"""Trainable building blocks: KAN layers, batch norm, dropout, loss, Adam.

Every forward function here returns ``(output, cache)`` and has a matching
``*_backward`` that maps an upstream gradient to parameter and input
gradients.  The model module chains them; ``tests/test_gradients.py``
certifies the chain against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import MogkanError
from .spline import SplineGrid, basis_matrix, silu, silu_grad

__all__ = [
    "KanLayer",
    "kan_layer_init",
    "kan_layer_forward",
    "kan_layer_edges",
    "kan_layer_backward",
    "BatchNormState",
    "batch_norm_init",
    "batch_norm_forward",
    "batch_norm_backward",
    "dropout",
    "dropout_mask",
    "softmax",
    "softmax_cross_entropy",
    "AdamState",
    "adam_init",
    "adam_step",
]

KAN_PARAMS = ("base_weights", "spline_weights", "coeffs")


@dataclass
class KanLayer:
    """A ``out_dim x in_dim`` matrix of univariate functions sharing one grid.

    ``out[b, q] = sum_p phi_qp(x[b, p])`` with
    ``phi_qp(x) = base_weights[q,p] * silu(x) + spline_weights[q,p] * coeffs[q,p] . B(x)``.
    """

    in_dim: int
    out_dim: int
    grid: SplineGrid
    base_weights: np.ndarray
    spline_weights: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        shapes = {
            "base_weights": (self.out_dim, self.in_dim),
            "spline_weights": (self.out_dim, self.in_dim),
            "coeffs": (self.out_dim, self.in_dim, self.grid.num_basis),
        }
        for name, shape in shapes.items():
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise MogkanError("shape-mismatch", f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise MogkanError("non-finite-input", f"{name} contains non-finite values")
            setattr(self, name, arr)

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in KAN_PARAMS}


def kan_layer_init(in_dim: int, out_dim: int, grid: SplineGrid, seed: int) -> KanLayer:
    if in_dim < 1 or out_dim < 1:
        raise MogkanError("invalid-size", f"layer dims must be >= 1, got {in_dim}x{out_dim}")
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(in_dim)
    base = rng.normal(0.0, scale, size=(out_dim, in_dim))
    coeffs = rng.normal(0.0, 0.1 * scale, size=(out_dim, in_dim, grid.num_basis))
    return KanLayer(in_dim, out_dim, grid, base, np.ones((out_dim, in_dim)), coeffs)


def _check_input(layer: KanLayer, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != layer.in_dim:
        raise MogkanError("shape-mismatch", f"expected (B, {layer.in_dim}) input, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise MogkanError("non-finite-input", "layer input contains NaN or inf")
    return x


def kan_layer_edges(layer: KanLayer, x):
    """Per-edge outputs ``phi_qp(x[b, p])`` with shape ``(B, out_dim, in_dim)``.

    Summing the last axis gives :func:`kan_layer_forward`; keeping it lets a
    caller sum over a subset of inputs (per-node banks in the graph layers).
    """
    x = _check_input(layer, x)
    basis, dbasis = basis_matrix(layer.grid, x, with_derivatives=True) if layer.grid.degree >= 1 \
        else (basis_matrix(layer.grid, x), None)
    act = silu(x)
    spline = np.einsum("qpj,bpj->bqp", layer.coeffs, basis)
    edges = layer.base_weights[None] * act[:, None, :] + layer.spline_weights[None] * spline
    cache = {"x": x, "act": act, "basis": basis, "dbasis": dbasis, "spline": spline}
    return edges, cache


def kan_layer_forward(layer: KanLayer, x) -> np.ndarray:
    edges, _ = kan_layer_edges(layer, x)
    return edges.sum(axis=2)


def kan_layer_backward(layer: KanLayer, cache: dict, d_edges: np.ndarray):
    """Backpropagate a gradient on the edge outputs.

    ``d_edges`` may be ``(B, out_dim, in_dim)`` or, for a summed layer,
    ``(B, out_dim)`` (broadcast over inputs).  Returns ``(grads, dx)``.
    """
    if d_edges.ndim == 2:
        d_edges = np.broadcast_to(d_edges[:, :, None], cache["spline"].shape)
    x = cache["x"]
    grads = {
        "base_weights": np.einsum("bqp,bp->qp", d_edges, cache["act"]),
        "spline_weights": np.einsum("bqp,bqp->qp", d_edges, cache["spline"]),
        "coeffs": np.einsum("bqp,qp,bpj->qpj", d_edges, layer.spline_weights, cache["basis"]),
    }
    dx = np.einsum("bqp,qp->bp", d_edges, layer.base_weights) * silu_grad(x)
    if cache["dbasis"] is not None:
        dspline = np.einsum("qpj,bpj->bqp", layer.coeffs, cache["dbasis"])
        dx = dx + np.einsum("bqp,qp,bqp->bp", d_edges, layer.spline_weights, dspline)
    return grads, dx


@dataclass
class BatchNormState:
    dim: int
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    epsilon: float = 1e-5

    def params(self) -> dict[str, np.ndarray]:
        return {"gamma": self.gamma, "beta": self.beta}


def batch_norm_init(dim: int, momentum: float = 0.1, epsilon: float = 1e-5) -> BatchNormState:
    if not 0.0 < momentum < 1.0:
        raise MogkanError("invalid-rate", f"momentum must lie in (0, 1), got {momentum}")
    if epsilon <= 0:
        raise MogkanError("invalid-rate", f"epsilon must be positive, got {epsilon}")
    return BatchNormState(dim, np.ones(dim), np.zeros(dim), np.zeros(dim), np.ones(dim), momentum, epsilon)


def batch_norm_forward(state: BatchNormState, x, mode: str = "train", update: bool = True):
    """Column-wise batch normalization.

    Train mode normalizes with the batch mean and population variance and
    (when ``update``) moves the running statistics toward the batch mean and
    the unbiased batch variance.  Eval mode uses the running statistics and
    never mutates ``state``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != state.dim:
        raise MogkanError("shape-mismatch", f"expected (B, {state.dim}), got {x.shape}")
    if mode == "train":
        n = x.shape[0]
        if n < 2:
            raise MogkanError("batch-too-small", "train-mode batch norm needs at least 2 rows")
        mean = x.mean(axis=0)
        var = x.var(axis=0)
        if update:
            m = state.momentum
            state.running_mean = (1 - m) * state.running_mean + m * mean
            state.running_var = (1 - m) * state.running_var + m * var * n / (n - 1)
    elif mode == "eval":
        mean, var = state.running_mean, state.running_var
    else:
        raise MogkanError("invalid-mode", f"mode must be 'train' or 'eval', got {mode!r}")
    inv_std = 1.0 / np.sqrt(var + state.epsilon)
    xhat = (x - mean) * inv_std
    out = state.gamma * xhat + state.beta
    return out, {"xhat": xhat, "inv_std": inv_std, "mode": mode}


def batch_norm_backward(state: BatchNormState, cache: dict, dy: np.ndarray):
    xhat, inv_std = cache["xhat"], cache["inv_std"]
    grads = {"gamma": (dy * xhat).sum(axis=0), "beta": dy.sum(axis=0)}
    dxhat = dy * state.gamma
    if cache["mode"] == "eval":
        return grads, dxhat * inv_std
    n = dy.shape[0]
    dx = inv_std / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
    return grads, dx


def dropout_mask(shape, rate: float, seed) -> np.ndarray:
    """Inverted-dropout multiplier: 0 for dropped entries, ``1/(1-rate)`` for kept ones.

    ``seed`` is anything :func:`numpy.random.default_rng` accepts; sequences
    of ints are hashable-cached so repeated passes reuse the mask.
    """
    if not 0.0 <= rate < 1.0:
        raise MogkanError("invalid-rate", f"dropout rate must lie in [0, 1), got {rate}")
    if rate == 0.0:
        return np.ones(shape)
    key = (tuple(shape), rate, tuple(np.atleast_1d(seed).tolist()))
    return _cached_mask(*key)


@lru_cache(maxsize=256)
def _cached_mask(shape, rate, seed):
    keep = np.random.default_rng(list(seed)).random(shape) >= rate
    mask = keep / (1.0 - rate)
    mask.flags.writeable = False
    return mask


def dropout(x, rate: float, seed, mode: str = "train") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not 0.0 <= rate < 1.0:
        raise MogkanError("invalid-rate", f"dropout rate must lie in [0, 1), got {rate}")
    if mode == "eval" or rate == 0.0:
        return x.copy()
    return x * dropout_mask(x.shape, rate, seed)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch.

    Returns ``(loss, probabilities, dlogits)``; ``dlogits`` is the gradient of
    the mean loss with respect to ``logits``.
    """
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels)
    n, c = logits.shape
    if labels.shape != (n,):
        raise MogkanError("shape-mismatch", f"need {n} labels, got {labels.shape}")
    if n and (labels.min() < 0 or labels.max() >= c):
        raise MogkanError("label-out-of-range", f"labels must lie in [0, {c})")
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsum
    probs = np.exp(logp)
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()
    dlogits = probs.copy()
    dlogits[rows, labels] -= 1.0
    return float(loss), probs, dlogits / n


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


def adam_init(params: dict[str, np.ndarray], beta1=0.9, beta2=0.999, epsilon=1e-8) -> AdamState:
    return AdamState(
        beta1, beta2, epsilon, 0,
        {k: np.zeros_like(v) for k, v in params.items()},
        {k: np.zeros_like(v) for k, v in params.items()},
    )


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              learning_rate: float, weight_decay: float = 0.0):
    """One Adam update with decoupled weight decay, applied in place.

    ``param <- param - lr * wd * param`` happens before the moment update.
    Returns ``(params, state)`` for convenience.
    """
    for name, p in params.items():
        if name not in grads or grads[name].shape != p.shape:
            raise MogkanError("shape-mismatch", f"gradient for {name!r} missing or mis-shaped")
        if name not in state.first_moment:
            state.first_moment[name] = np.zeros_like(p)
            state.second_moment[name] = np.zeros_like(p)
        if state.first_moment[name].shape != p.shape:
            raise MogkanError("shape-mismatch", f"optimizer state for {name!r} is mis-shaped")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for name, p in params.items():
        g = grads[name]
        if weight_decay:
            p -= learning_rate * weight_decay * p
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        p -= learning_rate * mhat / (np.sqrt(vhat) + state.epsilon)
    return params, state
