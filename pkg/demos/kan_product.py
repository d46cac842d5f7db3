"""
A two-layer KAN learns a product
================================

``x1 * x2`` is not a sum of univariate functions, but two stacked KAN layers
with ``2d + 1 = 5`` hidden units can represent it. Gradients are exact and
the optimizer is Adam.
"""

import numpy as np

from mogkan.kan import adam_init, adam_step, kan_layer_backward, kan_layer_edges, kan_layer_forward, kan_layer_init
from mogkan.spline import make_grid

rng = np.random.default_rng(0)
grid = make_grid(-3, 3, 5, 3)
inner = kan_layer_init(2, 5, grid, seed=0)
outer = kan_layer_init(5, 1, grid, seed=1)

X = rng.uniform(-1, 1, (256, 2))
y = X[:, 0] * X[:, 1]

params = {f"inner.{k}": v for k, v in inner.params().items()}
params.update({f"outer.{k}": v for k, v in outer.params().items()})
state = adam_init(params)

for step in range(2001):
    e1, c1 = kan_layer_edges(inner, X)
    e2, c2 = kan_layer_edges(outer, e1.sum(axis=2))
    resid = e2.sum(axis=2)[:, 0] - y
    if step % 500 == 0:
        print(f"step {step:4d}  mse {np.mean(resid ** 2):.2e}")
    g_outer, d_hidden = kan_layer_backward(outer, c2, (2 * resid / len(y))[:, None])
    g_inner, _ = kan_layer_backward(inner, c1, d_hidden)
    grads = {f"inner.{k}": v for k, v in g_inner.items()}
    grads.update({f"outer.{k}": v for k, v in g_outer.items()})
    adam_step(params, grads, state, learning_rate=1e-2)

###############################################################################
# Held-out check on fresh points.

Xt = rng.uniform(-1, 1, (1000, 2))
pred = kan_layer_forward(outer, kan_layer_forward(inner, Xt))[:, 0]
print("test mse:", np.mean((pred - Xt[:, 0] * Xt[:, 1]) ** 2))
