"""Symmetrization rules: structure, point estimate, intervals."""

import numpy as np
import pytest

from qbgraph.aggregate import (
    build_graph_estimate,
    credible_intervals,
    disjoint_interval_pairs,
    point_estimate,
    symmetrize_structure,
)
from qbgraph.model import DataMatrix, Hyperparameters, reduced_index
from qbgraph.orchestrator import FitResult, fit_all
from qbgraph.samplers import ChainConfig, ChainSummary
from qbgraph.simulate import gen_setting_c, sample_gaussian


def _summary(p, incl=None, mean=None, q025=None, q975=None):
    m = p - 1
    zeros = np.zeros(m)
    return ChainSummary(
        inclusion_freq=zeros if incl is None else np.asarray(incl, dtype=float),
        theta_mean=zeros if mean is None else np.asarray(mean, dtype=float),
        theta_q025=zeros if q025 is None else np.asarray(q025, dtype=float),
        theta_q975=zeros if q975 is None else np.asarray(q975, dtype=float),
        pseudo_loglik_trace_stats=(0.0, 0.0),
        geweke_z=None,
        acceptance_rates={},
    )


def _fit(summaries, sigma2):
    return FitResult(
        summaries=summaries,
        sigma2_used=np.asarray(sigma2, dtype=float),
        wall_time=0.0,
        config_echo={},
    )


class TestStructure:
    def test_and_rule_cases(self):
        # column chains for p=3; coordinate of global i in column j is
        # reduced_index(j, i)
        p = 3
        incl = np.zeros((p, p))  # incl[i, j]: frequency of i within chain j
        incl[1, 0], incl[0, 1] = 0.6, 0.7  # edge (0,1): both above -> kept
        incl[2, 0], incl[0, 2] = 0.6, 0.4  # edge (0,2): one below -> dropped
        incl[2, 1], incl[1, 2] = 0.5, 0.9  # edge (1,2): 0.5 is not > 0.5
        summaries = []
        for j in range(p):
            freq = np.zeros(p - 1)
            for i in range(p):
                if i != j:
                    freq[reduced_index(j, i)] = incl[i, j]
            summaries.append(_summary(p, incl=freq))
        delta = symmetrize_structure(_fit(summaries, np.ones(p)))
        assert delta[0, 1] and delta[1, 0]
        assert not delta[0, 2] and not delta[2, 0]
        assert not delta[1, 2] and not delta[2, 1]
        assert delta.diagonal().all()


class TestPointEstimate:
    def test_two_node_average(self):
        p = 2
        summaries = [
            _summary(p, mean=[-0.3]),
            _summary(p, mean=[-0.3]),
        ]
        fit = _fit(summaries, [1.0, 1.0])
        delta = np.ones((2, 2), dtype=bool)
        theta = point_estimate(fit, fit.sigma2_used, delta)
        # theta_01 = 0.5*(-1/1)*(-0.3) + 0.5*(-1/1)*(-0.3) = 0.3
        assert theta.entries[0, 1] == pytest.approx(0.3)
        assert theta.entries[1, 0] == pytest.approx(0.3)
        np.testing.assert_allclose(np.diag(theta.entries), 1.0)

    def test_diagonal_from_sigma2(self):
        p = 2
        fit = _fit([_summary(p), _summary(p)], [0.5, 2.0])
        delta = np.eye(2, dtype=bool)
        theta = point_estimate(fit, fit.sigma2_used, delta)
        np.testing.assert_allclose(np.diag(theta.entries), [2.0, 0.5])
        assert theta.entries[0, 1] == 0.0  # excluded edge stays zero

    def test_asymmetric_views_average(self):
        p = 2
        summaries = [_summary(p, mean=[-0.4]), _summary(p, mean=[-0.2])]
        fit = _fit(summaries, [1.0, 2.0])
        delta = np.ones((2, 2), dtype=bool)
        theta = point_estimate(fit, fit.sigma2_used, delta)
        expected = 0.5 * (-1.0 / 1.0) * (-0.4) + 0.5 * (-1.0 / 2.0) * (-0.2)
        assert theta.entries[0, 1] == pytest.approx(expected)


class TestIntervals:
    def test_hull_of_overlapping_views(self):
        p = 2
        # view from column 0: [-q975, -q025] = [0.1, 0.3]
        # view from column 1: [0.2, 0.5]; hull = [0.1, 0.5]
        summaries = [
            _summary(p, q025=[-0.3], q975=[-0.1]),
            _summary(p, q025=[-0.5], q975=[-0.2]),
        ]
        fit = _fit(summaries, [1.0, 1.0])
        delta = np.ones((2, 2), dtype=bool)
        out = credible_intervals(fit, fit.sigma2_used, delta)
        np.testing.assert_allclose(out[0, 1], [0.1, 0.5])
        np.testing.assert_allclose(out[1, 0], [0.1, 0.5])
        assert disjoint_interval_pairs(fit, fit.sigma2_used, delta) == []

    def test_sigma_rescaling(self):
        p = 2
        summaries = [
            _summary(p, q025=[-0.4], q975=[-0.2]),
            _summary(p, q025=[-0.4], q975=[-0.2]),
        ]
        fit = _fit(summaries, [2.0, 2.0])
        delta = np.ones((2, 2), dtype=bool)
        out = credible_intervals(fit, fit.sigma2_used, delta)
        np.testing.assert_allclose(out[0, 1], [0.1, 0.2])

    def test_excluded_edges_and_diagonal(self):
        p = 2
        fit = _fit([_summary(p, q025=[-1.0], q975=[-0.5])] * 2, [0.5, 4.0])
        delta = np.eye(2, dtype=bool)
        out = credible_intervals(fit, fit.sigma2_used, delta)
        np.testing.assert_allclose(out[0, 0], [2.0, 2.0])
        np.testing.assert_allclose(out[1, 1], [0.25, 0.25])
        np.testing.assert_allclose(out[0, 1], [0.0, 0.0])

    def test_disjoint_views_flagged_but_hulled(self):
        p = 2
        summaries = [
            _summary(p, q025=[-0.2], q975=[-0.1]),  # [0.1, 0.2]
            _summary(p, q025=[-0.4], q975=[-0.3]),  # [0.3, 0.4]
        ]
        fit = _fit(summaries, [1.0, 1.0])
        delta = np.ones((2, 2), dtype=bool)
        out = credible_intervals(fit, fit.sigma2_used, delta)
        np.testing.assert_allclose(out[0, 1], [0.1, 0.4])
        assert disjoint_interval_pairs(fit, fit.sigma2_used, delta) == [(1, 0)]


class TestEndToEnd:
    def test_estimate_structure_and_coverage(self):
        theta_true = gen_setting_c(p=6, seed=4)
        data = sample_gaussian(theta_true, n=500, seed=5)
        sigma2 = 1.0 / np.diag(theta_true.entries)
        hyper = Hyperparameters(sigma2=sigma2, a2=60.0)
        fit = fit_all(
            data, hyper, ChainConfig(seed=6, n_iterations=6000, burn_in=1500), workers=2
        )
        est = build_graph_estimate(fit)

        assert np.array_equal(est.delta_hat, est.delta_hat.T)
        sym_err = np.abs(est.theta_hat.entries - est.theta_hat.entries.T).max()
        assert sym_err == 0.0
        np.testing.assert_allclose(
            np.diag(est.theta_hat.entries), np.diag(theta_true.entries)
        )

        # interval hulls should cover the truth on most recovered edges
        ii, jj = np.nonzero(np.triu(est.delta_hat, k=1))
        true_edges = theta_true.entries[ii, jj] != 0.0
        assert true_edges.any()
        lo = est.intervals[ii, jj, 0]
        hi = est.intervals[ii, jj, 1]
        covered = (
            (lo[true_edges] <= theta_true.entries[ii, jj][true_edges])
            & (theta_true.entries[ii, jj][true_edges] <= hi[true_edges])
        )
        assert covered.mean() >= 0.8

    def test_data_matrix_round_trip_consistency(self):
        # build_graph_estimate consumes sigma2 from the fit itself
        rng = np.random.default_rng(8)
        data = DataMatrix(entries=rng.standard_normal((40, 4)))
        hyper = Hyperparameters(sigma2=np.full(4, 1.3), a2=20.0)
        fit = fit_all(data, hyper, ChainConfig(seed=2, n_iterations=400, burn_in=100))
        est = build_graph_estimate(fit)
        np.testing.assert_allclose(np.diag(est.theta_hat.entries), 1.0 / 1.3)
