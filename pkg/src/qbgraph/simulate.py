"""Ground-truth precision matrices and Gaussian data for experiments.

Two generator families:

* ``gen_setting_c``: sparse symmetric matrix with roughly 2p strong
  off-diagonal entries (magnitude > signal) whose minimal eigenvalue is
  pinned exactly at ``eps`` by a diagonal shift.
* ``gen_hub``: a module-structured graph (disjoint blocks, a few high-degree
  hub nodes per module, low-degree everything else) with partial
  correlations of moderate magnitude, positive definite with minimal
  eigenvalue at least 0.1.

``sample_gaussian`` draws i.i.d. rows from N(0, theta^{-1}) through a
triangular solve against the Cholesky factor of theta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .model import DataMatrix, PrecisionMatrix

__all__ = ["GeneratorSpec", "gen_setting_c", "gen_hub", "sample_gaussian", "generate"]

KINDS = ("setting_c", "hub")


@dataclass(frozen=True)
class GeneratorSpec:
    """Which generator to run and with what shape.

    For ``kind="hub"`` the graph is ``modules`` disjoint blocks of
    ``module_size`` nodes; each block has ``hubs_per_module`` hub nodes of
    degree ``hub_degree`` (partners drawn among non-hubs) plus
    ``nonhub_edges`` extra edges among non-hubs, whose degrees never exceed
    ``max_nonhub_degree``.  ``p`` must equal modules * module_size.
    """

    kind: str
    p: int
    seed: int
    signal: float = 3.0
    eps: float = 1.0
    modules: int = 5
    module_size: int = 100
    hubs_per_module: int = 3
    hub_degree: int = 15
    max_nonhub_degree: int = 4
    nonhub_edges: int = 72

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "hub":
            if self.p != self.modules * self.module_size:
                raise ValueError(
                    f"hub layout needs p = modules*module_size = "
                    f"{self.modules * self.module_size}, got p={self.p}"
                )
            non_hubs = self.module_size - self.hubs_per_module
            if non_hubs <= 0:
                raise ValueError("module_size must exceed hubs_per_module")
            if self.hub_degree > non_hubs:
                raise ValueError("hub_degree exceeds available non-hub partners")
            # every hub partnership consumes one unit of non-hub capacity
            hub_load = self.hubs_per_module * self.hub_degree
            capacity = non_hubs * self.max_nonhub_degree
            if hub_load + 2 * self.nonhub_edges > capacity:
                raise ValueError("degree budget infeasible for requested edge counts")
        elif self.p < 4:
            raise ValueError("setting_c needs p >= 4")


def gen_setting_c(p: int, seed: int, signal: float = 3.0, eps: float = 1.0) -> PrecisionMatrix:
    """Sparse strong-signal precision matrix with lambda_min pinned at eps.

    Picks exactly p unordered pairs uniformly without replacement, gives each
    a value u + signal*sign(u) with u ~ U(-1, 1) (so magnitudes lie in
    (signal, signal + 1]), symmetrizes into a zero-diagonal B, and returns
    B + (eps - lambda_min(B)) I.
    """
    if p < 4:
        raise ValueError(f"need p >= 4, got {p}")
    rng = np.random.default_rng(seed)
    n_pairs = p * (p - 1) // 2
    chosen = rng.choice(n_pairs, size=p, replace=False)
    rows, cols = np.triu_indices(p, k=1)
    u = rng.uniform(-1.0, 1.0, size=p)
    values = u + signal * np.sign(u)
    b = np.zeros((p, p))
    b[rows[chosen], cols[chosen]] = values
    b += b.T
    lam_min = float(np.linalg.eigvalsh(b)[0])
    theta = b + (eps - lam_min) * np.eye(p)
    return PrecisionMatrix(entries=theta, positive_definite=True)


def _module_edges(
    rng: np.random.Generator, spec: GeneratorSpec, offset: int
) -> list[tuple[int, int]]:
    """Edge list for one module, in global node ids starting at offset."""
    size = spec.module_size
    nodes = offset + rng.permutation(size)
    hubs = nodes[: spec.hubs_per_module]
    non_hubs = nodes[spec.hubs_per_module:]
    degree = {int(v): 0 for v in nodes}
    edges = []
    for h in hubs:
        order = rng.permutation(non_hubs.size)
        picked = 0
        for idx in order:
            v = int(non_hubs[idx])
            if degree[v] >= spec.max_nonhub_degree:
                continue
            edges.append((int(h), v))
            degree[int(h)] += 1
            degree[v] += 1
            picked += 1
            if picked == spec.hub_degree:
                break
        if picked < spec.hub_degree:
            raise ValueError("ran out of non-hub capacity while wiring hubs")
    existing = set(edges)
    placed = 0
    attempts = 0
    max_attempts = 200 * spec.nonhub_edges
    while placed < spec.nonhub_edges:
        attempts += 1
        if attempts > max_attempts:
            raise ValueError("could not place non-hub edges within the degree caps")
        a, b = rng.choice(non_hubs.size, size=2, replace=False)
        va, vb = int(non_hubs[a]), int(non_hubs[b])
        if va > vb:
            va, vb = vb, va
        if (va, vb) in existing or (vb, va) in existing:
            continue
        if degree[va] >= spec.max_nonhub_degree or degree[vb] >= spec.max_nonhub_degree:
            continue
        edges.append((va, vb))
        existing.add((va, vb))
        degree[va] += 1
        degree[vb] += 1
        placed += 1
    return edges


def gen_hub(spec: GeneratorSpec) -> PrecisionMatrix:
    """Module-structured hub graph with partial correlations in [0.10, 0.67].

    Edge partial correlations start at magnitude U(0.10, 0.45) with random
    signs on a unit diagonal.  If the matrix is not positive definite enough,
    all off-diagonal entries shrink multiplicatively, clipped at magnitude
    0.10 so every partial correlation stays in range; a residual global
    rescaling (which leaves partial correlations untouched) then pins
    lambda_min at 0.1 if the clip floor was reached first.
    """
    if spec.kind != "hub":
        raise ValueError(f"gen_hub needs kind='hub', got {spec.kind!r}")
    rng = np.random.default_rng(spec.seed)
    p = spec.p
    theta = np.eye(p)
    for mod in range(spec.modules):
        for i, j in _module_edges(rng, spec, mod * spec.module_size):
            mag = rng.uniform(0.10, 0.45)
            sign = 1.0 if rng.random() < 0.5 else -1.0
            theta[i, j] = theta[j, i] = sign * mag
    target = 0.1
    for _ in range(400):
        lam_min = float(np.linalg.eigvalsh(theta)[0])
        if lam_min >= target:
            break
        off = ~np.eye(p, dtype=bool)
        shrunk = theta[off] * 0.93
        nz = shrunk != 0.0
        shrunk[nz] = np.sign(shrunk[nz]) * np.maximum(np.abs(shrunk[nz]), 0.10)
        at_floor = np.all(np.abs(theta[off][theta[off] != 0.0]) <= 0.10 + 1e-12)
        theta[off] = shrunk
        if at_floor:
            if lam_min <= 0.0:
                raise ValueError("hub layout produced an indefinite matrix at the magnitude floor")
            theta *= target / lam_min
            break
    if float(np.linalg.eigvalsh(theta)[0]) < target - 1e-9:
        raise ValueError("shrinkage failed to reach the minimal-eigenvalue target")
    return PrecisionMatrix(entries=theta, positive_definite=True)


def sample_gaussian(theta: PrecisionMatrix, n: int, seed: int) -> DataMatrix:
    """n i.i.d. rows from N(0, theta^{-1}) via x = L^{-T} z, theta = L L^T."""
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    try:
        chol = np.linalg.cholesky(theta.entries)
    except np.linalg.LinAlgError as exc:
        raise ValueError("precision matrix is not positive definite") from exc
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, theta.p))
    x = solve_triangular(chol, z.T, lower=True, trans="T").T
    return DataMatrix(entries=np.ascontiguousarray(x))


def generate(spec: GeneratorSpec) -> PrecisionMatrix:
    """Dispatch on spec.kind."""
    if spec.kind == "setting_c":
        return gen_setting_c(spec.p, spec.seed, spec.signal, spec.eps)
    return gen_hub(spec)
