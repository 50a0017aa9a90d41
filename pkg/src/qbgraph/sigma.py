"""Per-column variance proxies: known values or cross-validated lasso residuals.

The samplers need a sigma_j^2 for every column regression.  In simulations
with a known precision matrix the right value is 1/theta_jj; on real data it
is estimated by K-fold cross-validation over a lasso path for regressing
column j on the others, with the residual variance corrected by the selected
model size:

    sigma2_hat = ||y - X beta(lambda_hat)||^2 / (n - s_hat)

The lasso solver is plain cyclic coordinate descent on Gram sufficient
statistics with a duality-gap stopping rule, deterministic by construction.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels as _k
from .model import DataMatrix, predictor_indices

__all__ = [
    "SigmaSpec",
    "DegenerateFitError",
    "lasso_cd",
    "estimate_sigma2_cv",
    "resolve_sigma2",
]

MODES = ("known", "cv")


class DegenerateFitError(RuntimeError):
    """Cross-validation selected as many coefficients as observations."""


@dataclass(frozen=True)
class SigmaSpec:
    """How to obtain the per-column variances.

    mode "known" returns known_values verbatim; mode "cv" cross-validates a
    lasso path per column.  lambda_grid overrides the default path of 50
    log-spaced values from lambda_max down to 1e-3 lambda_max (lambda_max
    the smallest penalty with an all-zero solution); it must be descending.
    """

    mode: str
    known_values: np.ndarray | None = None
    folds: int = 10
    lambda_grid: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "known":
            if self.known_values is None:
                raise ValueError("known mode requires known_values")
            vals = np.asarray(self.known_values, dtype=np.float64)
            if vals.ndim != 1 or np.any(vals <= 0.0) or not np.all(np.isfinite(vals)):
                raise ValueError("known_values must be a 1-D positive vector")
            object.__setattr__(self, "known_values", vals)
        if self.folds < 2:
            raise ValueError(f"folds must be >= 2, got {self.folds}")
        if self.lambda_grid is not None:
            grid = np.asarray(self.lambda_grid, dtype=np.float64)
            if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0.0):
                raise ValueError("lambda_grid must be 1-D and positive")
            if np.any(np.diff(grid) >= 0.0):
                raise ValueError("lambda_grid must be strictly descending")
            object.__setattr__(self, "lambda_grid", grid)


def lasso_cd(y, X, lam: float, beta0=None) -> np.ndarray:
    """Coordinate-descent lasso: argmin (1/(2n)) ||y - X b||^2 + lam ||b||_1.

    Cyclic sweeps to a 1e-8 duality gap; lam = 0 falls back to unpenalized
    coordinate descent and needs a well-posed design to converge to the
    least-squares solution.  beta0 warm-starts the sweep.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError(f"design shape {X.shape} incompatible with y of length {y.size}")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
        raise ValueError("non-finite inputs")
    if lam < 0.0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    n, m = X.shape
    beta = np.zeros(m) if beta0 is None else np.asarray(beta0, dtype=np.float64).copy()
    gram = X.T @ X
    xty = X.T @ y
    yty = float(y @ y)
    return _k._lasso_cd(gram, xty, yty, n, float(lam), beta, 2000, 1e-8)


def _cv_path(
    y: np.ndarray, X: np.ndarray, grid: np.ndarray, folds: int, rng: np.random.Generator
) -> float:
    """Lambda with minimal K-fold CV squared error (ties -> larger lambda)."""
    n = y.size
    order = rng.permutation(n)
    bounds = np.linspace(0, n, folds + 1).astype(int)
    sse = np.zeros(grid.size)
    for f in range(folds):
        test = order[bounds[f]: bounds[f + 1]]
        mask = np.ones(n, dtype=bool)
        mask[test] = False
        Xtr, ytr = X[mask], y[mask]
        Xte, yte = X[test], y[test]
        gram = Xtr.T @ Xtr
        xty = Xtr.T @ ytr
        yty = float(ytr @ ytr)
        beta = np.zeros(X.shape[1])
        for i, lam in enumerate(grid):
            beta = _k._lasso_cd(gram, xty, yty, Xtr.shape[0], float(lam), beta, 2000, 1e-8)
            resid = yte - Xte @ beta
            sse[i] += float(resid @ resid)
    return float(grid[int(np.argmin(sse))])


def estimate_sigma2_cv(data: DataMatrix, j: int, spec: SigmaSpec) -> float:
    """Cross-validated residual-variance estimate for column j.

    Selects lambda by K-fold CV (folds drawn from a stream seeded by
    (spec.seed, j), so columns are independent and the estimate is
    deterministic), refits on all rows, and corrects the residual variance
    by the active-set size.  Raises DegenerateFitError when the refit keeps
    n or more coefficients.
    """
    if spec.mode != "cv":
        raise ValueError("estimate_sigma2_cv requires mode='cv'")
    x = data.entries
    n, p = x.shape
    if not 0 <= j < p:
        raise ValueError(f"column index {j} out of range for p={p}")
    y = np.ascontiguousarray(x[:, j])
    X = np.ascontiguousarray(x[:, predictor_indices(j, p)])
    lam_max = float(np.abs(X.T @ y).max()) / n
    if lam_max <= 0.0:
        return max(float(y @ y) / n, 1e-8)
    grid = spec.lambda_grid
    if grid is None:
        grid = np.geomspace(lam_max, 1e-3 * lam_max, 50)
    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, j)))
    lam_hat = _cv_path(y, X, grid, spec.folds, rng)
    beta = lasso_cd(y, X, lam_hat)
    s_hat = int(np.count_nonzero(beta))
    if s_hat >= n:
        raise DegenerateFitError(
            f"column {j}: {s_hat} active coefficients with only {n} observations"
        )
    resid = y - X @ beta
    return max(float(resid @ resid) / (n - s_hat), 1e-8)


def _sigma_worker(args) -> tuple[int, float]:
    data, j, spec = args
    return j, estimate_sigma2_cv(data, j, spec)


def resolve_sigma2(data: DataMatrix, spec: SigmaSpec, workers: int = 1) -> np.ndarray:
    """Vector of sigma_j^2 for all columns under the given spec."""
    p = data.p
    if spec.mode == "known":
        vals = spec.known_values
        if vals.size != p:
            raise ValueError(f"known_values has length {vals.size}, expected {p}")
        return vals.copy()
    out = np.empty(p)
    if workers <= 1:
        for j in range(p):
            out[j] = estimate_sigma2_cv(data, j, spec)
        return out
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for j, value in pool.map(_sigma_worker, [(data, j, spec) for j in range(p)]):
            out[j] = value
    return out
