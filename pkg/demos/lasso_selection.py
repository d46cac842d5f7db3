"""
LASSO feature selection by coordinate descent
=============================================

The objective is the plain sum of squared residuals plus ``lam * |beta|_1``
with no ``1/(2n)`` factor, so ``lam`` scales with the sample count. Above
``lambda_max`` the solution is exactly zero.
"""

import numpy as np

from mogkan.selection import lambda_max, lasso_fit, lasso_kkt_violation, lasso_select_multiclass, standardize
from mogkan.data import encode_labels, synthesize

rng = np.random.default_rng(1)
X = rng.normal(size=(200, 30))
true = [4, 11, 27]
y = X[:, true] @ np.array([2.0, -1.5, 1.0]) + 0.5 * rng.normal(size=200)

lmax = lambda_max(X, y)
print(f"lambda_max = {lmax:.1f}")

for frac in (1.0, 0.5, 0.1, 0.01):
    res = lasso_fit(X, y, frac * lmax)
    support = np.flatnonzero(res.beta).tolist()
    kkt = lasso_kkt_violation(X, y, res.beta, frac * lmax)
    print(f"lam = {frac:>4} * max  sweeps {res.n_iter:3d}  kkt {kkt:.1e}  support {support}")

###############################################################################
# For class labels each class gets a centred one-vs-rest response and the
# selected sets are merged.

matrix, _, planted = synthesize(300, 40, 3, 6, seed=3)
_, labels = encode_labels(matrix)
Z, _, _ = standardize(matrix.values)
chosen = lasso_select_multiclass(Z, labels, lam=20.0)
print("planted :", planted)
print("selected:", chosen)
