"""
B-spline bases on a uniform grid
================================

Every learnable edge function in a KAN is a SiLU term plus a weighted sum of
B-spline basis functions. This script builds a cubic grid, checks the two
properties the rest of the library leans on and evaluates one edge function.
"""

import numpy as np

from mogkan.spline import basis_derivatives, basis_matrix, evaluate_univariate, make_grid

grid = make_grid(-3.0, 3.0, num_intervals=5, degree=3)
print("knots:", np.round(grid.knots, 3))
print("basis functions:", grid.num_basis)

###############################################################################
# Inside the grid range the bases sum to one, and at most ``degree + 1`` of
# them are active at any point.

xs = np.linspace(-3, 3, 13)
B = basis_matrix(grid, xs)
print("row sums:", np.round(B.sum(axis=1), 12))
print("active per point:", (B > 0).sum(axis=1))

###############################################################################
# Outside the range nothing is clamped: the bases taper off across the
# extension knots, and past the last knot only the SiLU term is left.

print("B(4.5) =", basis_matrix(grid, np.array([4.5]))[0].round(4))

###############################################################################
# Derivatives come from the lower-degree bases, so their sum is zero.

print("sum of B'(0.4):", basis_derivatives(grid, 0.4).sum())

coeffs = np.sin(np.linspace(-np.pi, np.pi, grid.num_basis))
for x in (-2.0, 0.0, 2.0):
    print(f"phi({x:+.1f}) = {evaluate_univariate(grid, 0.5, 1.0, coeffs, x):+.5f}")
