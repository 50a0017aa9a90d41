"""Precision-matrix generators and Gaussian sampling."""

import numpy as np
import pytest

from qbgraph.simulate import (
    GeneratorSpec,
    gen_hub,
    gen_setting_c,
    generate,
    sample_gaussian,
)

SMALL_HUB = dict(
    kind="hub",
    p=24,
    modules=2,
    module_size=12,
    hubs_per_module=1,
    hub_degree=6,
    max_nonhub_degree=3,
    nonhub_edges=5,
)


class TestSpecValidation:
    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="kind"):
            GeneratorSpec(kind="banded", p=10, seed=0)

    def test_setting_c_minimum_size(self):
        with pytest.raises(ValueError):
            GeneratorSpec(kind="setting_c", p=3, seed=0)

    def test_hub_shape_must_factor(self):
        with pytest.raises(ValueError, match="modules"):
            GeneratorSpec(kind="hub", p=11, seed=0, modules=2, module_size=5)

    def test_hub_degree_budget(self):
        # 1 hub of degree 5 among 6 non-hubs at cap 1: capacity 6 < 5 + 2*3
        with pytest.raises(ValueError, match="budget"):
            GeneratorSpec(
                kind="hub",
                p=7,
                seed=0,
                modules=1,
                module_size=7,
                hubs_per_module=1,
                hub_degree=5,
                max_nonhub_degree=1,
                nonhub_edges=3,
            )


class TestSettingC:
    def test_minimal_eigenvalue_pinned(self):
        for seed in range(20):
            theta = gen_setting_c(p=30, seed=seed)
            lam = np.linalg.eigvalsh(theta.entries)[0]
            assert lam == pytest.approx(1.0, abs=1e-8)

    def test_custom_eps(self):
        theta = gen_setting_c(p=12, seed=4, eps=0.25)
        assert np.linalg.eigvalsh(theta.entries)[0] == pytest.approx(0.25, abs=1e-8)

    def test_edge_count_and_magnitudes(self):
        for seed in range(20):
            p = 25
            theta = gen_setting_c(p=p, seed=seed)
            off = theta.entries[np.triu_indices(p, k=1)]
            nz = off[off != 0.0]
            assert nz.size == p  # exactly p unordered pairs
            assert np.abs(nz).min() > 3.0
            assert np.abs(nz).max() <= 4.0

    def test_signal_parameter(self):
        theta = gen_setting_c(p=20, seed=1, signal=5.0)
        off = theta.entries[np.triu_indices(20, k=1)]
        nz = off[off != 0.0]
        assert np.abs(nz).min() > 5.0
        assert np.abs(nz).max() <= 6.0

    def test_deterministic(self):
        a = gen_setting_c(p=15, seed=9)
        b = gen_setting_c(p=15, seed=9)
        np.testing.assert_array_equal(a.entries, b.entries)
        c = gen_setting_c(p=15, seed=10)
        assert not np.array_equal(a.entries, c.entries)


class TestHub:
    def test_structure(self):
        spec = GeneratorSpec(seed=3, **SMALL_HUB)
        theta = gen_hub(spec)
        adj = (theta.entries != 0.0) & ~np.eye(spec.p, dtype=bool)
        degrees = adj.sum(axis=1)
        expected_edges = spec.modules * (
            spec.hubs_per_module * spec.hub_degree + spec.nonhub_edges
        )
        assert adj.sum() == 2 * expected_edges
        # exactly hubs_per_module nodes of hub degree per module, everyone
        # else within the non-hub cap
        for mod in range(spec.modules):
            block = degrees[mod * spec.module_size : (mod + 1) * spec.module_size]
            assert (block == spec.hub_degree).sum() == spec.hubs_per_module
            non_hub_degrees = np.sort(block)[: spec.module_size - spec.hubs_per_module]
            assert non_hub_degrees.max() <= spec.max_nonhub_degree

    def test_no_cross_module_edges(self):
        spec = GeneratorSpec(seed=5, **SMALL_HUB)
        theta = gen_hub(spec)
        first = theta.entries[: spec.module_size, spec.module_size :]
        assert np.all(first == 0.0)

    def test_spectrum_and_magnitudes(self):
        for seed in range(5):
            spec = GeneratorSpec(seed=seed, **SMALL_HUB)
            theta = gen_hub(spec)
            lam = np.linalg.eigvalsh(theta.entries)[0]
            assert lam >= 0.1 - 1e-9
            diag = np.diag(theta.entries)
            # partial correlation of edge (i, j) is -theta_ij / sqrt(di dj)
            adj = (theta.entries != 0.0) & ~np.eye(spec.p, dtype=bool)
            ii, jj = np.nonzero(adj)
            pc = np.abs(theta.entries[ii, jj]) / np.sqrt(diag[ii] * diag[jj])
            assert pc.min() >= 0.10 - 1e-12
            assert pc.max() <= 0.67 + 1e-12

    def test_deterministic(self):
        spec = GeneratorSpec(seed=8, **SMALL_HUB)
        np.testing.assert_array_equal(gen_hub(spec).entries, gen_hub(spec).entries)

    def test_default_scale_layout(self):
        # the default hub layout at p=500: 5 modules, 585 edges total
        spec = GeneratorSpec(kind="hub", p=500, seed=0)
        theta = generate(spec)
        adj = (theta.entries != 0.0) & ~np.eye(500, dtype=bool)
        assert adj.sum() // 2 == 5 * (3 * 15 + 72)
        assert np.linalg.eigvalsh(theta.entries)[0] >= 0.1 - 1e-9


class TestSampleGaussian:
    def test_covariance_recovery(self):
        theta = gen_setting_c(p=6, seed=2)
        cov = np.linalg.inv(theta.entries)
        data = sample_gaussian(theta, n=100_000, seed=3)
        sample_cov = data.entries.T @ data.entries / data.n
        assert np.abs(sample_cov - cov).max() < 0.02

    def test_deterministic_and_shape(self):
        theta = gen_setting_c(p=5, seed=1)
        a = sample_gaussian(theta, n=50, seed=7)
        b = sample_gaussian(theta, n=50, seed=7)
        np.testing.assert_array_equal(a.entries, b.entries)
        assert (a.n, a.p) == (50, 5)

    def test_rejects_indefinite(self):
        from qbgraph.model import PrecisionMatrix

        m = np.eye(4)
        m[0, 1] = m[1, 0] = 2.0  # indefinite
        theta = PrecisionMatrix(entries=m, positive_definite=False)
        with pytest.raises(ValueError, match="positive definite"):
            sample_gaussian(theta, n=10, seed=0)


def test_generate_dispatch():
    a = generate(GeneratorSpec(kind="setting_c", p=10, seed=0))
    assert a.p == 10
    b = generate(GeneratorSpec(seed=0, **SMALL_HUB))
    assert b.p == 24
