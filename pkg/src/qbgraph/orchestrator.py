"""Parallel execution of the p per-column chains.

The joint quasi-posterior factorizes over columns, so the chains are
embarrassingly parallel.  Each column gets its own seed derived from
(seed_base, j) through a SeedSequence, making every chain's stream a pure
function of the base seed and its column index: results are bit-identical
no matter how many workers run or in what order tasks finish.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .model import DataMatrix, Hyperparameters
from .samplers import ChainConfig, ChainSummary, run_chain

__all__ = ["FitResult", "ColumnFitError", "derive_seed", "column_seed", "fit_all"]


class ColumnFitError(RuntimeError):
    """A per-column chain failed; .column holds the 0-based column index."""

    def __init__(self, column: int, message: str):
        super().__init__(f"column {column}: {message}")
        self.column = column


@dataclass(frozen=True)
class FitResult:
    """Summaries of all p chains plus provenance.

    ``summaries[j]`` belongs to column j.  ``config_echo`` records every
    resolved setting that influenced the run (chain, hyperparameter, and
    worker choices) for reproducibility.
    """

    summaries: list[ChainSummary]
    sigma2_used: np.ndarray
    wall_time: float
    config_echo: dict

    @property
    def p(self) -> int:
        return len(self.summaries)


def derive_seed(base: int, *keys: int) -> int:
    """Deterministic 64-bit stream seed from a base seed and integer keys."""
    seq = np.random.SeedSequence((int(base),) + tuple(int(k) for k in keys))
    return int(seq.generate_state(1, np.uint64)[0])


def column_seed(seed_base: int, j: int) -> int:
    """Chain seed for column j; independent of worker count and schedule."""
    return derive_seed(seed_base, j)


def _fit_column(args) -> tuple[int, ChainSummary]:
    j, data, hyper, config = args
    return j, run_chain(j, data, hyper, config)


def fit_all(
    data: DataMatrix,
    hyper: Hyperparameters,
    config: ChainConfig,
    workers: int = 1,
    progress: Callable[[int, int], None] | None = None,
) -> FitResult:
    """Run one chain per column and collect the summaries.

    ``config.seed`` acts as the base seed; column j runs with the derived
    ``column_seed(config.seed, j)``.  ``workers`` sets the process-pool
    size; 1 runs in-process.  ``progress``, when given, is called with
    (completed, total) after each column finishes (in completion order; the
    count is monotone).  Any chain failure raises ColumnFitError carrying
    the lowest failing column index.
    """
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    p = data.p
    start = time.monotonic()
    tasks = [
        (j, data, hyper, replace(config, seed=column_seed(config.seed, j)))
        for j in range(p)
    ]
    summaries: list[ChainSummary | None] = [None] * p
    failures: dict[int, BaseException] = {}
    done = 0
    if workers == 1:
        for task in tasks:
            j = task[0]
            try:
                _, summaries[j] = _fit_column(task)
            except Exception as exc:
                failures[j] = exc
                break
            done += 1
            if progress is not None:
                progress(done, p)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_fit_column, task): task[0] for task in tasks}
            for fut in as_completed(futures):
                j = futures[fut]
                try:
                    _, summaries[j] = fut.result()
                except Exception as exc:
                    failures[j] = exc
                    continue
                done += 1
                if progress is not None:
                    progress(done, p)
    if failures:
        j = min(failures)
        raise ColumnFitError(j, str(failures[j])) from failures[j]
    echo = {
        "seed_base": config.seed,
        "n_iterations": config.n_iterations,
        "burn_in": config.burn_in,
        "kernel": config.kernel,
        "thin": config.thin,
        "rw_scale": config.rw_scale,
        "rho_step_frac": config.rho_step_frac,
        "adapt_rw": config.adapt_rw,
        "workers": workers,
        "alpha": hyper.alpha,
        "u": hyper.u,
        "a1": hyper.a1,
        "a2": hyper.a2,
        "gamma": hyper.gamma,
        "n": data.n,
        "p": p,
    }
    return FitResult(
        summaries=summaries,
        sigma2_used=np.asarray(hyper.sigma2, dtype=np.float64).copy(),
        wall_time=time.monotonic() - start,
        config_echo=echo,
    )
