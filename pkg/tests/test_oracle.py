"""Quadrature oracle for tiny columns.

The oracle is itself test infrastructure, so these tests stress its
numerics against independent computations: Monte Carlo importance sampling,
refinement stability, and structural symmetries that hold exactly.
"""

import math

import numpy as np
import pytest
from scipy.special import betaln, logsumexp

from qbgraph.model import DataMatrix, Hyperparameters, elastic_net_log_normalizer
from qbgraph.oracle import (
    MAX_ORACLE_COORDS,
    OracleGrid,
    exact_marginals_small,
    log_model_weight,
)


def _instance(seed=0, n=30, p=3, signal=(0.7, 0.0)):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    x[:, 0] = x[:, 1:] @ np.asarray(signal) + rng.standard_normal(n)
    return DataMatrix(entries=x)


def _hyper(p, **kw):
    kw.setdefault("sigma2", np.ones(p))
    kw.setdefault("a2", 8.0)
    kw.setdefault("a1", 0.5)
    return Hyperparameters(**kw)


class TestGuards:
    def test_grid_validation(self):
        with pytest.raises(ValueError):
            OracleGrid(theta_nodes=1)
        with pytest.raises(ValueError):
            OracleGrid(rho1=1.0)  # rho2 missing

    def test_too_many_coordinates(self):
        rng = np.random.default_rng(0)
        data = DataMatrix(entries=rng.standard_normal((20, MAX_ORACLE_COORDS + 2)))
        with pytest.raises(ValueError, match="at most"):
            exact_marginals_small(0, data, _hyper(MAX_ORACLE_COORDS + 2))

    def test_model_weight_delta_length(self):
        data = _instance()
        with pytest.raises(ValueError, match="length"):
            log_model_weight(0, data, _hyper(3), [True], 1.0, 1.0)


class TestStructure:
    def test_duplicated_predictors_symmetric(self):
        rng = np.random.default_rng(3)
        n = 25
        shared = rng.standard_normal(n)
        y = 0.6 * shared + rng.standard_normal(n)
        data = DataMatrix(entries=np.column_stack([y, shared, shared]))
        out = exact_marginals_small(0, data, _hyper(3))
        assert out.inclusion_prob[0] == pytest.approx(out.inclusion_prob[1], abs=1e-9)
        assert out.theta_mean[0] == pytest.approx(out.theta_mean[1], abs=1e-9)

    def test_probabilities_lie_in_unit_interval(self):
        data = _instance(seed=5)
        out = exact_marginals_small(0, data, _hyper(3))
        assert np.all(out.inclusion_prob >= 0.0)
        assert np.all(out.inclusion_prob <= 1.0)
        assert math.isfinite(out.log_evidence)

    def test_refinement_stability(self):
        data = _instance(seed=7)
        coarse = exact_marginals_small(0, data, _hyper(3), OracleGrid(theta_nodes=8, rho_nodes=6))
        fine = exact_marginals_small(0, data, _hyper(3), OracleGrid(theta_nodes=20, rho_nodes=12))
        assert np.abs(coarse.inclusion_prob - fine.inclusion_prob).max() < 1e-4
        assert fine.tolerance < 1e-6

    def test_reported_tolerance_bounds_observed_change(self):
        data = _instance(seed=11)
        out = exact_marginals_small(0, data, _hyper(3), OracleGrid(theta_nodes=10, rho_nodes=6))
        assert out.tolerance < 1e-3


class TestFixedRho:
    def test_softmax_of_model_weights_matches_marginals(self):
        data = _instance(seed=13, signal=(0.9, 0.2))
        hyper = _hyper(3)
        rho1, rho2 = 2.0, 1.5
        grid = OracleGrid(rho1=rho1, rho2=rho2)
        out = exact_marginals_small(0, data, hyper, grid)

        supports = [np.array(bits, dtype=bool) for bits in
                    [(False, False), (True, False), (False, True), (True, True)]]
        logw = np.array(
            [log_model_weight(0, data, hyper, s, rho1, rho2) for s in supports]
        )
        post = np.exp(logw - logsumexp(logw))
        incl0 = post[1] + post[3]
        incl1 = post[2] + post[3]
        assert incl0 == pytest.approx(out.inclusion_prob[0], abs=1e-8)
        assert incl1 == pytest.approx(out.inclusion_prob[1], abs=1e-8)

    def test_true_support_dominates_under_strong_signal(self):
        rng = np.random.default_rng(17)
        n = 200
        x1 = rng.standard_normal(n)
        x2 = rng.standard_normal(n)
        y = 1.5 * x1 + 0.05 * rng.standard_normal(n)
        data = DataMatrix(entries=np.column_stack([y, x1, x2]))
        hyper = _hyper(3, sigma2=np.array([0.05**2, 1.0, 1.0]))
        w = {
            bits: log_model_weight(0, data, hyper, np.array(bits), 1.0, 1.0)
            for bits in [(False, False), (True, False), (False, True), (True, True)]
        }
        assert w[(True, False)] > w[(False, False)]
        assert w[(True, False)] > w[(False, True)]
        assert w[(True, False)] > w[(True, True)]  # extra noise variable penalized


class TestImportanceSamplingCrossCheck:
    def test_inclusion_against_monte_carlo(self):
        # independent integration method: per-support self-normalized
        # importance sampling with a Gaussian proposal around least squares
        data = _instance(seed=19, n=40, signal=(0.8, -0.4))
        hyper = _hyper(3)
        rho1, rho2 = 1.5, 2.0
        out = exact_marginals_small(0, data, hyper, OracleGrid(rho1=rho1, rho2=rho2))

        y = data.entries[:, 0]
        X = data.entries[:, 1:]
        sigma2 = 1.0
        alpha, u, p = hyper.alpha, hyper.u, 3
        l1, l2 = alpha * rho1 / sigma2, (1 - alpha) * rho2 / sigma2
        log_c = elastic_net_log_normalizer(alpha, rho1 / sigma2, rho2 / sigma2)
        m = p - 1
        rng = np.random.default_rng(23)
        base = -0.5 * float(y @ y) / sigma2

        logz = []
        supports = [(False, False), (True, False), (False, True), (True, True)]
        for bits in supports:
            active = np.flatnonzero(bits)
            d = active.size
            prior_part = betaln(1.0 + d, p**u + m - d) - d * log_c
            if d == 0:
                logz.append(prior_part + base)
                continue
            Xa = X[:, active]
            gram = Xa.T @ Xa / sigma2
            cov = np.linalg.inv(gram + 1e-8 * np.eye(d)) * 2.0  # overdispersed
            mean = np.linalg.lstsq(Xa, y, rcond=None)[0]
            chol = np.linalg.cholesky(cov)
            draws = mean + rng.standard_normal((60_000, d)) @ chol.T
            resid = y[None, :] - draws @ Xa.T
            loglik = -0.5 * np.einsum("ij,ij->i", resid, resid) / sigma2
            logslab = -l1 * np.abs(draws).sum(axis=1) - 0.5 * l2 * np.einsum(
                "ij,ij->i", draws, draws
            )
            diff = draws - mean
            sol = np.linalg.solve(chol, diff.T)
            logprop = -0.5 * np.einsum("ij,ij->j", sol, sol) - np.log(
                np.sqrt((2 * np.pi) ** d) * np.prod(np.diag(chol))
            )
            logw = loglik + logslab - logprop
            logz.append(prior_part + logsumexp(logw) - math.log(draws.shape[0]))

        post = np.exp(np.asarray(logz) - logsumexp(logz))
        incl_mc = np.array([post[1] + post[3], post[2] + post[3]])
        np.testing.assert_allclose(incl_mc, out.inclusion_prob, atol=0.02)
