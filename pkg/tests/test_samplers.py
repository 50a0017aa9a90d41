"""Single-move kernels and the chain driver.

Distributional tests compare long-run MCMC frequencies against closed forms
or one-dimensional quadrature of the same target the kernels claim to leave
invariant; Monte Carlo error bands use batch means.
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from qbgraph.model import (
    DataMatrix,
    Hyperparameters,
    elastic_net_log_normalizer,
)
from qbgraph.samplers import (
    ChainConfig,
    gibbs_update_q,
    initial_state,
    l1_envelope,
    mh_update_rho,
    my_envelope_step,
    rj_update_pair,
    run_chain,
    smoothed_log_normalizer,
    soft_threshold,
    within_model_update_theta,
)


def _batch_se(values, batch=500):
    """Standard error of the mean from batch means; guards short inputs."""
    values = np.asarray(values, dtype=np.float64)
    n_batches = values.size // batch
    means = values[: n_batches * batch].reshape(n_batches, batch).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_batches))


def _toy_data(seed=0, n=25, p=3):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    x[:, 0] += 0.8 * x[:, 1]
    return DataMatrix(entries=x)


class TestProxAndEnvelope:
    def test_soft_threshold_values(self):
        assert soft_threshold(3.0, 1.0) == 2.0
        assert soft_threshold(-3.0, 1.0) == -2.0
        assert soft_threshold(0.5, 1.0) == 0.0
        assert soft_threshold(-0.2, 0.5) == 0.0
        assert soft_threshold(4.0, 0.0) == 4.0

    def test_envelope_piecewise(self):
        lam, gamma = 1.0, 0.2
        assert l1_envelope(0.0, lam, gamma) == 0.0
        t = 0.1  # inside |t| <= gamma * lam
        assert l1_envelope(t, lam, gamma) == pytest.approx(t * t / (2 * gamma))
        t = 1.5  # outside
        assert l1_envelope(t, lam, gamma) == pytest.approx(lam * t - gamma * lam**2 / 2)
        assert l1_envelope(-t, lam, gamma) == l1_envelope(t, lam, gamma)

    def test_envelope_continuous_at_kink(self):
        lam, gamma = 2.0, 0.1
        t = gamma * lam
        inner = t * t / (2 * gamma)
        outer = lam * t - gamma * lam**2 / 2
        assert inner == pytest.approx(outer)
        assert l1_envelope(t, lam, gamma) == pytest.approx(inner)

    def test_envelope_below_l1(self):
        for t in np.linspace(-3, 3, 41):
            assert l1_envelope(float(t), 1.7, 0.25) <= 1.7 * abs(t) + 1e-12


class TestSmoothedNormalizer:
    def test_matches_quadrature(self):
        rng = np.random.default_rng(11)
        for _ in range(8):
            alpha = rng.uniform(0.3, 1.0)
            l1 = rng.uniform(0.5, 8.0)
            l2 = rng.uniform(0.5, 8.0)
            gamma = rng.uniform(0.02, 0.25)

            def f(t):
                return math.exp(
                    -l1_envelope(t, alpha * l1, gamma) - 0.5 * (1 - alpha) * l2 * t * t
                )

            val, _ = quad(f, -np.inf, np.inf, limit=300)
            assert smoothed_log_normalizer(alpha, l1, l2, gamma) == pytest.approx(
                math.log(val), abs=1e-8
            )

    def test_gamma_to_zero_limit(self):
        target = elastic_net_log_normalizer(0.9, 3.0, 2.0)
        errs = [
            abs(smoothed_log_normalizer(0.9, 3.0, 2.0, g) - target)
            for g in (0.2, 0.05, 0.0125)
        ]
        assert errs[0] > errs[1] > errs[2]
        # the gap shrinks linearly in gamma, about gamma * (alpha * l1)^2 / 2
        assert errs[2] < 0.06
        assert errs[2] < 0.12 * errs[0]


class TestGibbsQ:
    def test_exact_conditional_parameters(self):
        # the update must consume exactly one Beta draw with these parameters
        p, u = 6, 1.5
        delta = np.array([True, False, True, True, False])
        rng1 = np.random.default_rng(42)
        rng2 = np.random.default_rng(42)
        drawn = gibbs_update_q(delta, p, u, rng1)
        expected = rng2.beta(1.0 + 3, p**u + (p - 1) - 3)
        assert drawn == expected

    def test_moments(self):
        p, u, nd = 5, 1.5, 2
        delta = np.array([True, True, False, False])
        rng = np.random.default_rng(7)
        draws = np.array([gibbs_update_q(delta, p, u, rng) for _ in range(20_000)])
        a, b = 1.0 + nd, p**u + (p - 1) - nd
        mean = a / (a + b)
        var = a * b / ((a + b) ** 2 * (a + b + 1))
        assert draws.mean() == pytest.approx(mean, abs=4 * math.sqrt(var / draws.size))
        assert draws.var() == pytest.approx(var, rel=0.1)


class TestRhoUpdate:
    def test_always_accepts_on_empty_model(self):
        # with no active coordinates the target has no rho dependence and the
        # reflected proposal is symmetric, so every proposal is accepted
        hyper = Hyperparameters(sigma2=np.ones(3), a2=10.0)
        state = initial_state(3, hyper)
        rng = np.random.default_rng(1)
        moved = 0
        for _ in range(500):
            new = mh_update_rho(state, hyper, 1.0, rng)
            assert hyper.a1 <= new.rho1 <= hyper.a2
            assert hyper.a1 <= new.rho2 <= hyper.a2
            moved += (new.rho1 != state.rho1) or (new.rho2 != state.rho2)
            state = new
        assert moved == 500

    def test_marginal_against_quadrature(self):
        # hold (delta, theta) fixed; rho then has an explicit conditional
        # density on [a1, a2]^2, which the MH chain must reproduce
        alpha, a1, a2, sigma2 = 0.9, 0.1, 6.0, 1.0
        hyper = Hyperparameters(sigma2=np.array([sigma2]), alpha=alpha, a1=a1, a2=a2)
        t = 0.9
        state = initial_state(2, hyper)
        state.delta[0] = True
        state.theta[0] = t

        grid = np.linspace(a1, a2, 501)
        r1, r2 = np.meshgrid(grid, grid, indexing="ij")
        logc = np.vectorize(
            lambda u, v: elastic_net_log_normalizer(alpha, u / sigma2, v / sigma2)
        )(r1, r2)
        logd = (
            -logc
            - alpha * (r1 / sigma2) * abs(t)
            - 0.5 * (1 - alpha) * (r2 / sigma2) * t * t
        )
        dens = np.exp(logd - logd.max())
        marg1 = dens.sum(axis=1)
        marg1 /= marg1.sum()

        rng = np.random.default_rng(3)
        draws = np.empty(40_000)
        for i in range(draws.size):
            state = mh_update_rho(state, hyper, sigma2, rng)
            draws[i] = state.rho1
        draws = draws[4000:]

        bins = np.linspace(a1, a2, 21)
        hist, _ = np.histogram(draws, bins=bins)
        hist = hist / hist.sum()
        exact = np.array(
            [
                marg1[(grid >= lo) & (grid < hi)].sum()
                for lo, hi in zip(bins[:-1], bins[1:])
            ]
        )
        exact[-1] += marg1[grid >= bins[-1]].sum()
        tv = 0.5 * np.abs(hist - exact).sum()
        assert tv < 0.03


class TestReversibleJump:
    def test_out_of_range_coordinate(self):
        data = _toy_data()
        hyper = Hyperparameters(sigma2=np.ones(3), a2=10.0)
        state = initial_state(3, hyper)
        with pytest.raises(ValueError):
            rj_update_pair(state, 2, 0, data, hyper, np.random.default_rng(0))

    def test_invariants_over_many_updates(self):
        data = _toy_data(seed=2)
        hyper = Hyperparameters(sigma2=np.ones(3), a2=10.0)
        state = initial_state(3, hyper)
        rng = np.random.default_rng(9)
        for i in range(3000):
            k = i % 2
            new = rj_update_pair(state, k, 0, data, hyper, rng)
            new.check_consistent()
            # the flip only touches coordinate k and never (q, rho)
            other = 1 - k
            assert new.delta[other] == state.delta[other]
            assert new.theta[other] == state.theta[other]
            assert (new.q, new.rho1, new.rho2) == (state.q, state.rho1, state.rho2)
            state = new

    def test_determinism(self):
        data = _toy_data(seed=4)
        hyper = Hyperparameters(sigma2=np.ones(3), a2=10.0)

        def trajectory(seed):
            state = initial_state(3, hyper)
            rng = np.random.default_rng(seed)
            out = []
            for i in range(200):
                state = rj_update_pair(state, i % 2, 1, data, hyper, rng)
                out.append((state.delta.copy(), state.theta.copy()))
            return out

        a, b = trajectory(5), trajectory(5)
        for (da, ta), (db, tb) in zip(a, b):
            np.testing.assert_array_equal(da, db)
            np.testing.assert_array_equal(ta, tb)

    def test_occupancy_matches_quadrature(self):
        # p=2: a single coordinate; alternating flip and within-model moves
        # must reproduce P(delta=1) of the fixed-(q, rho) target
        rng0 = np.random.default_rng(13)
        x1 = rng0.standard_normal(30)
        y = 0.35 * x1 + rng0.standard_normal(30)
        data = DataMatrix(entries=np.column_stack([y, x1]))
        alpha, sigma2 = 0.9, 1.0
        hyper = Hyperparameters(sigma2=np.array([sigma2, sigma2]), alpha=alpha, a2=10.0)
        state = initial_state(2, hyper)
        q, rho1, rho2 = 0.25, 2.0, 1.0
        state.q, state.rho1, state.rho2 = q, rho1, rho2

        l1, l2 = rho1 / sigma2, rho2 / sigma2
        log_c = elastic_net_log_normalizer(alpha, l1, l2)
        ll0 = -float(y @ y) / (2 * sigma2)

        def unnorm(t):
            resid = y - t * x1
            ll = -float(resid @ resid) / (2 * sigma2)
            return math.exp(ll - ll0 - alpha * l1 * abs(t) - 0.5 * (1 - alpha) * l2 * t * t)

        z1, _ = quad(unnorm, -np.inf, np.inf, limit=300)
        odds = (q / (1 - q)) * z1 / math.exp(log_c)
        p_active = odds / (1.0 + odds)

        rng = np.random.default_rng(17)
        occupied = np.empty(60_000)
        for i in range(occupied.size):
            state = rj_update_pair(state, 0, 0, data, hyper, rng)
            state = within_model_update_theta(state, 0, data, hyper, rng)
            occupied[i] = state.delta[0]
        occupied = occupied[5000:]
        se = max(_batch_se(occupied), 1e-4)
        assert occupied.mean() == pytest.approx(p_active, abs=5 * se + 0.01)


class TestWithinModel:
    def test_noop_on_empty_model(self):
        data = _toy_data()
        hyper = Hyperparameters(sigma2=np.ones(3), a2=10.0)
        state = initial_state(3, hyper)
        rng = np.random.default_rng(0)
        before = rng.bit_generator.state["state"]["state"]
        new = within_model_update_theta(state, 0, data, hyper, rng)
        after = rng.bit_generator.state["state"]["state"]
        assert before == after  # no randomness consumed
        np.testing.assert_array_equal(new.theta, state.theta)

    def test_gaussian_slab_posterior_moments(self):
        # alpha=0 makes the slab Gaussian, so the within-model target on a
        # fixed support is exactly N(mu, Sigma); check both moments
        rng0 = np.random.default_rng(21)
        n = 40
        x = rng0.standard_normal((n, 3))
        data = DataMatrix(entries=x)
        sigma2, rho2 = 1.5, 2.0
        hyper = Hyperparameters(sigma2=np.full(3, sigma2), alpha=0.0, a2=10.0)
        state = initial_state(3, hyper)
        state.delta[:] = True
        state.rho1, state.rho2 = 1.0, rho2

        X = x[:, [1, 2]]
        y = x[:, 0]
        prec = X.T @ X / sigma2 + (rho2 / sigma2) * np.eye(2)
        cov = np.linalg.inv(prec)
        mu = cov @ (X.T @ y) / sigma2

        rng = np.random.default_rng(23)
        draws = np.empty((60_000, 2))
        for i in range(draws.shape[0]):
            state = within_model_update_theta(state, 0, data, hyper, rng)
            draws[i] = state.theta
        draws = draws[5000:]
        for k in range(2):
            se = max(_batch_se(draws[:, k]), 1e-5)
            assert draws[:, k].mean() == pytest.approx(mu[k], abs=5 * se + 5e-4)
        sample_cov = np.cov(draws.T)
        assert np.allclose(sample_cov, cov, rtol=0.15, atol=2e-4)


class TestMySweep:
    def test_preserves_consistency_and_moves(self):
        data = _toy_data(seed=6)
        hyper = Hyperparameters(sigma2=np.ones(3), a2=10.0, gamma=0.2)
        state = initial_state(3, hyper)
        state.q = 0.3
        rng = np.random.default_rng(2)
        occupied = 0
        for _ in range(800):
            state = my_envelope_step(state, 0, data, hyper, rng)
            state.check_consistent()
            occupied += int(state.delta.sum())
        assert occupied > 0  # the smoothed kernel does visit occupied models


class TestChainConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            ChainConfig(seed=0, n_iterations=0)
        with pytest.raises(ValueError):
            ChainConfig(seed=0, n_iterations=10, burn_in=10)
        with pytest.raises(ValueError):
            ChainConfig(seed=0, kernel="other")
        with pytest.raises(ValueError):
            ChainConfig(seed=0, thin=0)


class TestRunChain:
    def test_deterministic_given_seed(self):
        data = _toy_data(seed=8, n=30, p=4)
        hyper = Hyperparameters(sigma2=np.ones(4), a2=20.0)
        cfg = ChainConfig(seed=99, n_iterations=3000, burn_in=500)
        a = run_chain(1, data, hyper, cfg)
        b = run_chain(1, data, hyper, cfg)
        np.testing.assert_array_equal(a.inclusion_freq, b.inclusion_freq)
        np.testing.assert_array_equal(a.theta_mean, b.theta_mean)
        np.testing.assert_array_equal(a.theta_q025, b.theta_q025)
        assert a.pseudo_loglik_trace_stats == b.pseudo_loglik_trace_stats
        assert a.acceptance_rates == b.acceptance_rates
        c = run_chain(1, data, hyper, ChainConfig(seed=100, n_iterations=3000, burn_in=500))
        assert not np.array_equal(a.theta_mean, c.theta_mean)

    def test_single_retained_sample(self):
        data = _toy_data(seed=8, n=30, p=4)
        hyper = Hyperparameters(sigma2=np.ones(4), a2=20.0)
        cfg = ChainConfig(seed=1, n_iterations=101, burn_in=100)
        out = run_chain(0, data, hyper, cfg)
        assert out.pseudo_loglik_trace_stats[1] == 0.0
        assert out.geweke_z is None
        np.testing.assert_array_equal(out.theta_q025, out.theta_mean)
        np.testing.assert_array_equal(out.theta_q975, out.theta_mean)

    def test_thinning_granularity(self):
        data = _toy_data(seed=8, n=30, p=4)
        hyper = Hyperparameters(sigma2=np.ones(4), a2=20.0)
        cfg = ChainConfig(seed=5, n_iterations=1000, burn_in=0, thin=10)
        out = run_chain(0, data, hyper, cfg)
        # 100 retained samples; every frequency is a multiple of 1/100
        counts = out.inclusion_freq * 100
        np.testing.assert_allclose(counts, np.round(counts), atol=1e-9)

    def test_rate_keys_per_kernel(self):
        data = _toy_data(seed=8, n=30, p=4)
        hyper = Hyperparameters(sigma2=np.ones(4), a2=20.0)
        exact = run_chain(0, data, hyper, ChainConfig(seed=2, n_iterations=500, burn_in=100))
        my = run_chain(
            0, data, hyper, ChainConfig(seed=2, n_iterations=500, burn_in=100, kernel="my")
        )
        assert set(exact.acceptance_rates) == {"rho", "birth", "death", "theta_rw"}
        assert set(my.acceptance_rates) == {"rho", "birth", "death", "mala"}
        for rates in (exact.acceptance_rates, my.acceptance_rates):
            assert all(0.0 <= v <= 1.0 for v in rates.values())

    def test_adaptation_stays_deterministic(self):
        data = _toy_data(seed=8, n=30, p=4)
        hyper = Hyperparameters(sigma2=np.ones(4), a2=20.0)
        cfg = ChainConfig(seed=3, n_iterations=2000, burn_in=500, adapt_rw=True)
        a = run_chain(2, data, hyper, cfg)
        b = run_chain(2, data, hyper, cfg)
        np.testing.assert_array_equal(a.theta_mean, b.theta_mean)
