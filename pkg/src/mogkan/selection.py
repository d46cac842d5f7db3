"""Feature selection: standardization, a Welch t-test filter and LASSO.

The LASSO solver minimizes the unnormalized objective

    sum_i (y_i - x_i . beta)^2 + lam * sum_j |beta_j|

(no ``1/(2n)`` factor), so ``lam`` is on the scale of ``2 * |X^T y|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MogkanError

__all__ = [
    "standardize",
    "apply_standardization",
    "regularized_incomplete_beta",
    "welch_pvalues",
    "welch_filter",
    "LassoResult",
    "lasso_objective",
    "lasso_kkt_violation",
    "lasso_fit",
    "lasso_select",
    "lasso_select_multiclass",
    "lambda_max",
]


def standardize(matrix):
    """Center columns and scale to unit sample standard deviation.

    Returns ``(standardized, mean, std)``.  Constant columns are centered
    only and get ``std = 0``.
    """
    X = np.asarray(matrix, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise MogkanError("too-few-rows", "standardization needs at least 2 rows")
    mean = X.mean(axis=0)
    std = X.std(axis=0, ddof=1)
    std = np.where(std > 0, std, 0.0)
    return apply_standardization(X, mean, std), mean, std


def apply_standardization(matrix, mean, std) -> np.ndarray:
    X = np.asarray(matrix, dtype=float)
    scale = np.where(std > 0, std, 1.0)
    return (X - mean) / scale


def regularized_incomplete_beta(x, a, b, max_iter: int = 500, eps: float = 1e-15):
    """``I_x(a, b)`` by the modified Lentz continued fraction.

    Uses ``I_x(a, b) = 1 - I_{1-x}(b, a)`` when ``x > (a + 1) / (a + b + 2)``
    so the fraction always converges quickly.  Vectorized over ``x``, ``a``,
    ``b`` (broadcast).
    """
    x, a, b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, a, b)))
    out = np.empty(x.shape)
    flip = x > (a + 1.0) / (a + b + 2.0)
    xx = np.where(flip, 1.0 - x, x)
    aa = np.where(flip, b, a)
    bb = np.where(flip, a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        lbeta = np.vectorize(math.lgamma)(aa + bb) - np.vectorize(math.lgamma)(aa) - np.vectorize(math.lgamma)(bb)
        front = np.exp(lbeta + aa * np.log(xx) + bb * np.log1p(-xx)) / aa
    tiny = 1e-300
    c = np.ones(x.shape)
    d = 1.0 - (aa + bb) * xx / (aa + 1.0)
    d = np.where(np.abs(d) < tiny, tiny, d)
    d = 1.0 / d
    f = d.copy()
    done = np.zeros(x.shape, dtype=bool)
    for m in range(1, max_iter + 1):
        # even step
        num = m * (bb - m) * xx / ((aa + 2 * m - 1) * (aa + 2 * m))
        d = 1.0 + num * d
        d = np.where(np.abs(d) < tiny, tiny, d)
        c = 1.0 + num / c
        c = np.where(np.abs(c) < tiny, tiny, c)
        d = 1.0 / d
        f = np.where(done, f, f * d * c)
        # odd step
        num = -(aa + m) * (aa + bb + m) * xx / ((aa + 2 * m) * (aa + 2 * m + 1))
        d = 1.0 + num * d
        d = np.where(np.abs(d) < tiny, tiny, d)
        c = 1.0 + num / c
        c = np.where(np.abs(c) < tiny, tiny, c)
        d = 1.0 / d
        delta = d * c
        f = np.where(done, f, f * delta)
        done |= np.abs(delta - 1.0) < eps
        if done.all():
            break
    val = front * f
    val = np.where(xx <= 0.0, 0.0, val)
    out[...] = np.where(flip, 1.0 - val, val)
    return out if out.ndim else float(out)


def welch_pvalues(matrix, groups) -> np.ndarray:
    """Two-sided Welch t-test p-value per column between groups 0 and 1."""
    X = np.asarray(matrix, dtype=float)
    g = np.asarray(groups)
    a, b = X[g == 0], X[g == 1]
    if len(a) < 2 or len(b) < 2:
        raise MogkanError("degenerate-groups", "each group needs at least 2 samples")
    na, nb = len(a), len(b)
    va, vb = a.var(axis=0, ddof=1) / na, b.var(axis=0, ddof=1) / nb
    diff = a.mean(axis=0) - b.mean(axis=0)
    se2 = va + vb
    p = np.ones(X.shape[1])
    ok = se2 > 0
    t2 = diff[ok] ** 2 / se2[ok]
    df = se2[ok] ** 2 / (va[ok] ** 2 / (na - 1) + vb[ok] ** 2 / (nb - 1))
    p[ok] = regularized_incomplete_beta(df / (df + t2), df / 2.0, 0.5)
    # zero variance in both groups: any mean difference is certain
    p[~ok] = np.where(diff[~ok] == 0, 1.0, 0.0)
    return p


def welch_filter(matrix, groups, p_threshold: float = 0.001) -> list[int]:
    """Indices of columns with Welch p-value strictly below ``p_threshold``.

    A threshold of 1 or more keeps every column (including those with
    ``p == 1``, e.g. identical group means).  A stand-in for count-model
    differential-expression filters: same role in the pipeline (keep
    features that separate two groups), simpler statistics.
    """
    p = welch_pvalues(matrix, groups)
    if p_threshold >= 1.0:
        return list(range(len(p)))
    return np.flatnonzero(p < p_threshold).tolist()


@dataclass
class LassoResult:
    beta: np.ndarray
    converged: bool
    n_iter: int
    objective_history: list[float] = field(default_factory=list)


def lasso_objective(X, y, beta, lam) -> float:
    r = y - X @ beta
    return float(r @ r + lam * np.abs(beta).sum())


def lasso_kkt_violation(X, y, beta, lam) -> float:
    """Largest violation of the optimality conditions.

    With ``g = 2 X^T (y - X beta)``: ``|g_j| <= lam`` where ``beta_j == 0``
    and ``g_j == lam * sign(beta_j)`` elsewhere.
    """
    g = 2.0 * X.T @ (y - X @ beta)
    zero = beta == 0
    viol = np.where(zero, np.maximum(np.abs(g) - lam, 0.0), np.abs(g - lam * np.sign(beta)))
    return float(viol.max()) if viol.size else 0.0


def lambda_max(X, y) -> float:
    """Smallest ``lam`` for which ``beta = 0`` is optimal."""
    return float(np.max(np.abs(2.0 * np.asarray(X).T @ np.asarray(y)))) if np.size(X) else 0.0


def lasso_fit(X, y, lam: float, tol: float = 1e-8, max_iter: int = 10000, beta0=None,
              track_objective: bool = False) -> LassoResult:
    """Cyclic coordinate descent in ascending column order.

    Coordinate update: ``beta_j = S(x_j . r_j, lam / 2) / |x_j|^2`` where
    ``r_j`` is the residual with coordinate ``j`` removed and ``S`` is the
    soft threshold.  Stops once a sweep moves no coefficient by ``tol`` or
    more *and* the KKT violation is at most ``tol``; otherwise returns after
    ``max_iter`` sweeps with ``converged=False``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if lam < 0:
        raise MogkanError("invalid-lambda", "lambda must be >= 0")
    if tol <= 0:
        raise MogkanError("invalid-tolerance", "tol must be > 0")
    n, p = X.shape
    if y.shape != (n,):
        raise MogkanError("shape-mismatch", f"y must have length {n}")
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    col_sq = (X ** 2).sum(axis=0)
    r = y - X @ beta
    half = lam / 2.0
    history = [lasso_objective(X, y, beta, lam)] if track_objective else []
    if not beta.any() and lam >= lambda_max(X, y):
        # zero already satisfies the optimality conditions; sweeping could only add rounding noise
        return LassoResult(beta, True, 0, history)
    for sweep in range(1, max_iter + 1):
        max_delta = 0.0
        for j in range(p):
            if col_sq[j] == 0.0:
                if beta[j] != 0.0:
                    beta[j] = 0.0
                continue
            old = beta[j]
            rho = X[:, j] @ r + col_sq[j] * old
            new = np.sign(rho) * max(abs(rho) - half, 0.0) / col_sq[j]
            if new != old:
                r -= X[:, j] * (new - old)
                beta[j] = new
                max_delta = max(max_delta, abs(new - old))
        if track_objective:
            history.append(lasso_objective(X, y, beta, lam))
        if max_delta < tol and lasso_kkt_violation(X, y, beta, lam) <= tol:
            return LassoResult(beta, True, sweep, history)
    return LassoResult(beta, False, max_iter, history)


def lasso_select(X, y, lam: float, tol: float = 1e-8, max_iter: int = 10000) -> list[int]:
    res = lasso_fit(X, y, lam, tol=tol, max_iter=max_iter)
    return np.flatnonzero(res.beta != 0).tolist()


def lasso_select_multiclass(X, labels, lam: float, tol: float = 1e-8, max_iter: int = 10000) -> list[int]:
    """Union of supports over one-vs-rest responses ``1[label == c] - mean``.

    Two classes need only one fit (the two responses are negatives of each
    other and share a support).
    """
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if len(classes) == 2:
        classes = classes[:1]
    selected: set[int] = set()
    for c in classes:
        yc = (labels == c).astype(float)
        selected.update(lasso_select(X, yc - yc.mean(), lam, tol, max_iter))
    return sorted(selected)
