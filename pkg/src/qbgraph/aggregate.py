"""Symmetrization of per-column chain summaries into a graph estimate.

Each edge (i, j) is seen twice: as coordinate i in column j's regression and
as coordinate j in column i's.  The rules here combine the two views:

* structure: edge present iff both inclusion frequencies exceed 0.5;
* point estimate: average of the two rescaled coefficient means,
  theta_hat_ij = 0.5 (-1/sigma_j^2) mean_ij + 0.5 (-1/sigma_i^2) mean_ji,
  with diagonal 1/sigma_j^2 and zeros on excluded edges;
* intervals: convex hull of the two per-chain 95% quantile intervals mapped
  through z -> -z/sigma^2, degenerate {0} on excluded edges and
  {1/sigma_j^2} on the diagonal.

The hull of two disjoint intervals is still an interval; such pairs are
reported separately as a mixing diagnostic rather than silently merged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import PrecisionMatrix, reduced_index
from .orchestrator import FitResult

__all__ = [
    "GraphEstimate",
    "symmetrize_structure",
    "point_estimate",
    "credible_intervals",
    "disjoint_interval_pairs",
    "build_graph_estimate",
]


@dataclass(frozen=True)
class GraphEstimate:
    """Symmetric graph estimate with intervals.

    ``intervals`` has shape (p, p, 2) holding [lower, upper] per entry;
    excluded edges carry [0, 0] and the diagonal [1/sigma_j^2, 1/sigma_j^2].
    ``disjoint_pairs`` lists edges whose two per-chain intervals did not
    overlap before taking the hull.
    """

    delta_hat: np.ndarray
    theta_hat: PrecisionMatrix
    intervals: np.ndarray
    disjoint_pairs: list[tuple[int, int]] = field(default_factory=list)


def _inclusion_matrix(fit: FitResult) -> np.ndarray:
    """freq[i, j] = inclusion frequency of coordinate i within column j's chain."""
    p = fit.p
    freq = np.zeros((p, p))
    for j, summary in enumerate(fit.summaries):
        for i in range(p):
            if i == j:
                continue
            freq[i, j] = summary.inclusion_freq[reduced_index(j, i)]
    return freq


def symmetrize_structure(summaries: FitResult) -> np.ndarray:
    """AND-rule structure: edge iff both directional frequencies exceed 0.5."""
    freq = _inclusion_matrix(summaries)
    delta = (freq > 0.5) & (freq.T > 0.5)
    np.fill_diagonal(delta, True)
    return delta


def point_estimate(summaries: FitResult, sigma2, delta_hat: np.ndarray) -> PrecisionMatrix:
    """Averaged rescaled coefficient means on the selected structure."""
    p = summaries.p
    sig = np.asarray(sigma2, dtype=np.float64)
    theta = np.zeros((p, p))
    np.fill_diagonal(theta, 1.0 / sig)
    for j in range(p):
        mean_j = summaries.summaries[j].theta_mean
        for i in range(j + 1, p):
            if not delta_hat[i, j]:
                continue
            mean_ij = mean_j[reduced_index(j, i)]
            mean_ji = summaries.summaries[i].theta_mean[reduced_index(i, j)]
            value = 0.5 * (-1.0 / sig[j]) * mean_ij + 0.5 * (-1.0 / sig[i]) * mean_ji
            theta[i, j] = theta[j, i] = value
    return PrecisionMatrix(entries=theta, positive_definite=False)


def _chain_interval(summary, k: int, sigma2_j: float) -> tuple[float, float]:
    """Per-chain 95% interval for the precision entry seen from one column."""
    lo = -summary.theta_q975[k] / sigma2_j
    hi = -summary.theta_q025[k] / sigma2_j
    return lo, hi


def credible_intervals(summaries: FitResult, sigma2, delta_hat: np.ndarray) -> np.ndarray:
    """Hulls of the two per-chain 95% intervals; degenerate off the structure."""
    p = summaries.p
    sig = np.asarray(sigma2, dtype=np.float64)
    out = np.zeros((p, p, 2))
    for j in range(p):
        out[j, j, :] = 1.0 / sig[j]
    for j in range(p):
        for i in range(j + 1, p):
            if not delta_hat[i, j]:
                continue
            lo_j, hi_j = _chain_interval(
                summaries.summaries[j], reduced_index(j, i), sig[j]
            )
            lo_i, hi_i = _chain_interval(
                summaries.summaries[i], reduced_index(i, j), sig[i]
            )
            lo, hi = min(lo_j, lo_i), max(hi_j, hi_i)
            out[i, j] = out[j, i] = (lo, hi)
    return out


def disjoint_interval_pairs(
    summaries: FitResult, sigma2, delta_hat: np.ndarray
) -> list[tuple[int, int]]:
    """Edges whose two per-chain intervals do not overlap (mixing warning)."""
    p = summaries.p
    sig = np.asarray(sigma2, dtype=np.float64)
    pairs = []
    for j in range(p):
        for i in range(j + 1, p):
            if not delta_hat[i, j]:
                continue
            lo_j, hi_j = _chain_interval(
                summaries.summaries[j], reduced_index(j, i), sig[j]
            )
            lo_i, hi_i = _chain_interval(
                summaries.summaries[i], reduced_index(i, j), sig[i]
            )
            if hi_j < lo_i or hi_i < lo_j:
                pairs.append((i, j))
    return pairs


def build_graph_estimate(fit: FitResult) -> GraphEstimate:
    """Full aggregation: structure, point estimate, intervals, diagnostics."""
    delta = symmetrize_structure(fit)
    sigma2 = fit.sigma2_used
    return GraphEstimate(
        delta_hat=delta,
        theta_hat=point_estimate(fit, sigma2, delta),
        intervals=credible_intervals(fit, sigma2, delta),
        disjoint_pairs=disjoint_interval_pairs(fit, sigma2, delta),
    )
