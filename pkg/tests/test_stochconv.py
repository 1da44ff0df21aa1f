"""Stochastic integral, convolution, weak solution and the exact Gaussian route."""

import numpy as np
import pytest
from scipy import stats

from src.covariance import CovarianceMatrix
from src.errors import DomainError, FractionalAccuracyWarning, GridMismatchError, PSDRepairError
from src.fbm import HurstParameter, TimeGrid
from src.resolvent import Kernel, build_resolvent_table
from src.spectral import HilbertPath, OperatorField, SpectralModel, sample_hilbert_fbm, sample_hilbert_fbm_batch
from src.stochconv import (
    EXACT_GAUSSIAN,
    RIEMANN,
    convolution_coords,
    covariance_sqrt,
    exact_gaussian_batch,
    exact_gaussian_convolution,
    riemann_scheme_covariance,
    simulate_convolution,
    simulate_weak_solution,
    stochastic_integral,
    warn_if_slow_riemann,
)


@pytest.fixture
def model():
    return SpectralModel(2, np.array([1.0, 0.25]), np.array([-1.0, -4.0]))


class TestStochasticIntegral:
    def test_identity_returns_noise(self, grid, model):
        noise = sample_hilbert_fbm(model, grid, 0.7, seed=1)
        out = stochastic_integral(OperatorField.identity(grid, 2), noise)
        np.testing.assert_allclose(out.coords, noise.coords, atol=1e-13)

    def test_zero_field(self, grid, model):
        noise = sample_hilbert_fbm(model, grid, 0.7, seed=1)
        out = stochastic_integral(OperatorField.zeros(grid, 2), noise)
        assert not out.coords.any()

    def test_left_point_sum(self):
        g = TimeGrid(1.0, 2)
        noise = HilbertPath(g, np.array([[0.0, 1.0, 3.0]]), HurstParameter(0.5))
        F = OperatorField(g, np.array([[[2.0]], [[5.0]], [[7.0]]]))
        # 2 * (1 - 0) + 5 * (3 - 1); F at the right end is never used
        np.testing.assert_allclose(stochastic_integral(F, noise).coords, [[0.0, 2.0, 12.0]])

    def test_grid_mismatch(self, grid, model):
        noise = sample_hilbert_fbm(model, grid, 0.7, seed=1)
        with pytest.raises(GridMismatchError):
            stochastic_integral(OperatorField.identity(TimeGrid(1.0, 64), 2), noise)


class TestConvolution:
    def test_trivial_semigroup_reduces_to_integral(self, grid, model):
        table = build_resolvent_table([0.0, 0.0], Kernel.power(1.0), grid)
        F = OperatorField.identity(grid, 2)
        noise = sample_hilbert_fbm(model, grid, 0.6, seed=4)
        conv = simulate_convolution(table, F, noise)
        assert conv.method == RIEMANN
        np.testing.assert_allclose(conv.coords, stochastic_integral(F, noise).coords, atol=1e-13)
        np.testing.assert_array_equal(conv.as_path().coords, conv.coords)

    def test_batch_matches_single(self, grid, model):
        table = build_resolvent_table(model.mu, Kernel.power(1.0), grid)
        F = OperatorField.identity(grid, 2)
        coords, _ = sample_hilbert_fbm_batch(model, grid, 0.6, 4, [0, 1, 2])
        batch = convolution_coords(table.modes, F, coords)
        single = simulate_convolution(table, F, sample_hilbert_fbm(model, grid, 0.6, 4, replica=2))
        np.testing.assert_array_equal(batch[2], single.coords)
        np.testing.assert_array_equal(convolution_coords(table.modes, F, coords[1:]), batch[1:])

    def test_weak_solution_without_noise(self, grid, model):
        table = build_resolvent_table(model.mu, Kernel.power(1.0), grid)
        noise = HilbertPath.zeros(grid, 2, 0.5)
        X = simulate_weak_solution([1.0, 2.0], table, OperatorField.identity(grid, 2), noise)
        np.testing.assert_allclose(X.coords, table.modes * np.array([[1.0], [2.0]]))
        with pytest.raises(DomainError):
            simulate_weak_solution([1.0], table, OperatorField.identity(grid, 2), noise)

    def test_slow_riemann_warning(self):
        with pytest.warns(FractionalAccuracyWarning):
            warn_if_slow_riemann(0.25)


class TestSchemeCovariance:
    def test_brownian_integral(self, grid):
        table = build_resolvent_table([0.0, 0.0], Kernel.power(1.0), grid)
        lam = np.array([1.0, 0.25])
        cov = riemann_scheme_covariance(table, OperatorField.identity(grid, 2), lam, 0.5, 0.5)
        np.testing.assert_allclose(cov, np.diag(lam * 0.5), rtol=1e-12, atol=1e-15)

    def test_matches_monte_carlo(self, model):
        g = TimeGrid(1.0, 32)
        table = build_resolvent_table(model.mu, Kernel.power(1.0), g)
        F = OperatorField.identity(g, 2)
        coords, _ = sample_hilbert_fbm_batch(model, g, 0.7, 5, list(range(4000)))
        X = convolution_coords(table.modes, F, coords)[:, :, -1]
        want = riemann_scheme_covariance(table, F, model.lam, 0.7, 1.0)
        np.testing.assert_allclose(np.cov(X.T), want, rtol=0.1, atol=0.02 * want.max())

    def test_zero_time(self, grid, model):
        table = build_resolvent_table(model.mu, Kernel.power(1.0), grid)
        cov = riemann_scheme_covariance(table, OperatorField.identity(grid, 2), model.lam, 0.5, 0.0)
        assert not cov.any()


class TestExactGaussian:
    def test_sqrt(self):
        A = np.array([[2.0, 0.5], [0.5, 1.0]])
        R = covariance_sqrt(A)
        np.testing.assert_allclose(R @ R, A, atol=1e-14)

    def test_sqrt_rejects_indefinite(self):
        with pytest.raises(PSDRepairError):
            covariance_sqrt(np.diag([1.0, -0.1]))

    def test_draws(self):
        A = np.array([[2.0, 0.5], [0.5, 1.0]])
        z = exact_gaussian_batch(A, 3, list(range(20000)), node=4)
        np.testing.assert_allclose(np.cov(z.T), A, atol=0.08)
        again = exact_gaussian_batch(A, 3, [7], node=4)
        np.testing.assert_array_equal(again[0], z[7])
        other_node = exact_gaussian_batch(A, 3, [7], node=5)
        assert not np.allclose(other_node[0], z[7])
        assert EXACT_GAUSSIAN == "exact_gaussian"

    def test_convolution_marginals(self):
        covs = [
            CovarianceMatrix(0.5, np.diag([1.0, 0.5]), 0.7),
            CovarianceMatrix(1.0, np.diag([2.0, 1.0]), 0.7),
        ]
        sample = exact_gaussian_convolution(covs, seed=5, replica=3)
        assert sample.method == EXACT_GAUSSIAN
        assert sample.coords.shape == (2, 2)
        np.testing.assert_array_equal(sample.times, [0.5, 1.0])
        assert sample.hurst.H == 0.7
        expected = exact_gaussian_batch(covs[1].entries, 5, [3], node=1)[0]
        np.testing.assert_array_equal(sample.coords[:, 1], expected)
        with pytest.raises(DomainError):
            exact_gaussian_convolution([], seed=5)


class TestPathLaw:
    @pytest.mark.parametrize("c", [2.0, 0.5])
    def test_linear_in_noise(self, grid, model, c):
        table = build_resolvent_table(model.mu, Kernel.power(0.5), grid)
        F = OperatorField.identity(grid, 2)
        noise = sample_hilbert_fbm(model, grid, 0.7, seed=2)
        base = simulate_convolution(table, F, noise)
        scaled = simulate_convolution(table, F, noise.scaled(c))
        np.testing.assert_array_equal(scaled.coords, c * base.coords)
        assert not base.coords[:, 0].any()

    def test_mean_zero_and_gaussian_marginals(self, model):
        g = TimeGrid(1.0, 16)
        N = 20000
        table = build_resolvent_table(model.mu, Kernel.power(1.0), g)
        coords, _ = sample_hilbert_fbm_batch(model, g, 0.7, 13, list(range(N)))
        X = convolution_coords(table.modes, OperatorField.identity(g, 2), coords)[:, :, 1:]
        mean = X.mean(axis=0)
        sd = X.std(axis=0, ddof=1)
        assert np.all(np.abs(mean) <= 4.0 * sd / np.sqrt(N))
        terminal = X[:, :, -1]
        assert np.all(np.abs(stats.skew(terminal, axis=0)) < 4.0 * np.sqrt(6.0 / N))
        assert np.all(np.abs(stats.kurtosis(terminal, axis=0)) < 4.0 * np.sqrt(24.0 / N))
