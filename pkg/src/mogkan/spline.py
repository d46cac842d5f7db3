"""Uniform B-spline bases for the learnable univariate functions.

Every univariate function in a KAN layer is

    phi(x) = base_weight * silu(x) + spline_weight * sum_j coeffs[j] * B_j(x)

where ``B_j`` are the degree-``k`` B-splines on a uniform knot vector that
extends ``k`` knots past each end of ``[range_min, range_max]``.  Inputs
outside the range are evaluated by the same recursion on the extended knots
(no clamping); beyond the outermost knots every basis function is zero and
only the SiLU term remains.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import expit

from .errors import MogkanError

__all__ = [
    "SplineGrid",
    "make_grid",
    "basis_values",
    "basis_derivatives",
    "basis_matrix",
    "silu",
    "silu_grad",
    "evaluate_univariate",
]


@dataclass(frozen=True)
class SplineGrid:
    range_min: float
    range_max: float
    num_intervals: int
    degree: int

    @property
    def spacing(self) -> float:
        return (self.range_max - self.range_min) / self.num_intervals

    @property
    def num_basis(self) -> int:
        return self.num_intervals + self.degree

    @cached_property
    def knots(self) -> np.ndarray:
        k = self.degree
        idx = np.arange(-k, self.num_intervals + k + 1, dtype=float)
        return self.range_min + idx * self.spacing

    def to_dict(self) -> dict:
        return {
            "range_min": self.range_min,
            "range_max": self.range_max,
            "num_intervals": self.num_intervals,
            "degree": self.degree,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplineGrid":
        return make_grid(d["range_min"], d["range_max"], d["num_intervals"], d["degree"])


def make_grid(range_min: float, range_max: float, num_intervals: int = 5, degree: int = 3) -> SplineGrid:
    """Build a uniform grid with ``degree`` extension knots on each side."""
    if not (np.isfinite(range_min) and np.isfinite(range_max)) or range_min >= range_max:
        raise MogkanError("invalid-range", f"need range_min < range_max, got {range_min}, {range_max}")
    if int(num_intervals) != num_intervals or num_intervals < 1:
        raise MogkanError("invalid-size", f"num_intervals must be >= 1, got {num_intervals}")
    if int(degree) != degree or degree < 0:
        raise MogkanError("invalid-size", f"degree must be >= 0, got {degree}")
    return SplineGrid(float(range_min), float(range_max), int(num_intervals), int(degree))


def _levels(grid: SplineGrid, x: np.ndarray, upto: int) -> list[np.ndarray]:
    """Cox-de Boor recursion; returns the basis arrays for degrees 0..upto.

    Level ``d`` has shape ``x.shape + (len(knots) - 1 - d,)``.  Works in
    knot-index units ``s = (x - t_0) / h`` so knot ``i`` sits at ``s = i``.
    """
    nk = grid.num_intervals + 2 * grid.degree + 1
    s = ((x - grid.knots[0]) / grid.spacing)[..., None]
    pos = np.arange(nk, dtype=float)
    b = ((s >= pos[:-1]) & (s < pos[1:])).astype(float)
    # the last knot belongs to the last interval so the top endpoint is covered
    b[..., -1] += (s[..., 0] == pos[-1])
    out = [b]
    for d in range(1, upto + 1):
        n = nk - 1 - d
        # uniform knots: t[i+d] - t[i] == d * h
        left = (s - pos[:n]) * b[..., :n]
        right = (pos[d + 1:d + 1 + n] - s) * b[..., 1:]
        b = (left + right) / d
        out.append(b)
    return out


def basis_matrix(grid: SplineGrid, x, with_derivatives: bool = False):
    """Vectorized basis evaluation.

    Parameters
    ----------
    grid : SplineGrid
    x : array_like
        Any shape; must be finite.
    with_derivatives : bool
        Also return d/dx of every basis function (requires degree >= 1).

    Returns
    -------
    values : ndarray, shape ``x.shape + (num_basis,)``
    derivs : ndarray, same shape (only when ``with_derivatives``)
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise MogkanError("non-finite-input", "spline input contains NaN or inf")
    k = grid.degree
    if not with_derivatives:
        return _levels(grid, x, k)[k]
    if k == 0:
        raise MogkanError("unsupported-degree", "derivatives need degree >= 1")
    levels = _levels(grid, x, k)
    low = levels[k - 1]
    # dB_{i,k} = k/(t_{i+k}-t_i) B_{i,k-1} - k/(t_{i+k+1}-t_{i+1}) B_{i+1,k-1}, both ratios 1/h
    deriv = (low[..., :-1] - low[..., 1:]) / grid.spacing
    return levels[k], deriv


def basis_values(grid: SplineGrid, x: float) -> np.ndarray:
    """Values ``B_j(x)`` for a single point ``x``."""
    return basis_matrix(grid, float(x))


def basis_derivatives(grid: SplineGrid, x: float) -> np.ndarray:
    """Derivatives ``dB_j/dx`` at a single point.

    Exactly on a knot this is the right-sided derivative, since the degree-0
    indicators are closed on the left.
    """
    return basis_matrix(grid, float(x), with_derivatives=True)[1]


def silu(x):
    return x * expit(x)


def silu_grad(x):
    s = expit(x)
    return s * (1.0 + x * (1.0 - s))


def evaluate_univariate(grid: SplineGrid, base_weight: float, spline_weight: float, coeffs, x: float) -> float:
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (grid.num_basis,):
        raise MogkanError("length-mismatch", f"expected {grid.num_basis} coefficients, got {coeffs.shape}")
    return float(base_weight * silu(x) + spline_weight * basis_values(grid, x) @ coeffs)
