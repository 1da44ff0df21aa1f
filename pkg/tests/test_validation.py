"""Moment accumulation, the 4-SE gate, Monte Carlo harness and weak residuals."""

import numpy as np
import pandas as pd
import pytest

from conftest import small_config
from src import experiment, validation
from src.covariance import CovarianceMatrix
from src.errors import DomainError
from src.spectral import HilbertPath, sample_hilbert_fbm
from src.stochconv import EXACT_GAUSSIAN, RIEMANN, simulate_weak_solution


class TestMomentAccumulator:
    def test_matches_numpy(self):
        x = np.random.default_rng(0).normal(size=(500, 3)) @ np.array([[1, 0, 0], [0.5, 1, 0], [0, 0.2, 2]])
        acc = validation.MomentAccumulator.from_samples(x)
        np.testing.assert_allclose(acc.covariance(), np.cov(x.T), rtol=1e-12)
        np.testing.assert_allclose(acc.second_moment(), x.T @ x / len(x), rtol=1e-12)

    def test_merge_is_order_free(self):
        x = np.random.default_rng(1).normal(size=(300, 2)) + 3.0
        whole = validation.MomentAccumulator.from_samples(x)
        parts = validation.MomentAccumulator(2)
        for chunk in np.array_split(x, 7):
            parts.merge(validation.MomentAccumulator.from_samples(chunk))
        np.testing.assert_allclose(parts.mean, whole.mean, rtol=1e-13)
        np.testing.assert_allclose(parts.covariance(), whole.covariance(), rtol=1e-11)
        assert parts.count == 300

    def test_errors(self):
        acc = validation.MomentAccumulator(2)
        with pytest.raises(DomainError):
            acc.update(np.zeros((3, 3)))
        acc.update(np.ones((1, 2)))
        with pytest.raises(DomainError):
            acc.covariance()


class TestGate:
    def _report(self, failures, entries=200):
        table = pd.DataFrame({"z": np.zeros(entries), "passed": np.arange(entries) >= failures})
        return validation.ValidationReport(table)

    def test_calibration_allowance(self):
        assert self._report(2).allowed_failures == 2
        assert self._report(2).passed
        assert not self._report(3).passed
        assert not self._report(1, entries=50).passed

    def test_compare_exact_match(self):
        x = np.random.default_rng(2).normal(size=(1000, 2))
        acc = validation.MomentAccumulator.from_samples(x)
        report = validation.compare(acc, CovarianceMatrix(1.0, acc.covariance(), 0.5), node=4)
        assert report.passed and report.entries == 4
        np.testing.assert_allclose(report.table["z"], 0.0, atol=1e-12)
        assert (report.table["node"] == 4).all()

    def test_compare_flags_wrong_scale(self):
        x = np.random.default_rng(3).normal(size=(5000, 2))
        acc = validation.MomentAccumulator.from_samples(x)
        report = validation.compare(acc, CovarianceMatrix(1.0, 1.5 * np.eye(2), 0.5))
        assert not report.passed
        assert report.failures == 2
        assert "FAIL" in report.summary()
        assert "pass fraction: 0.5000" in report.summary()


class TestHarness:
    def test_exact_route_passes_and_fault_fails(self):
        setup = experiment.build(small_config(monte_carlo={"replicas": 2000, "times": [0.5, 1.0]}))
        report = validation.validate_experiment(setup)
        assert report.entries == 2 * 9
        assert report.passed, report.summary()
        assert report.methods == [EXACT_GAUSSIAN, EXACT_GAUSSIAN]
        assert not validation.validate_experiment(setup, inject_fault=True).passed

    def test_riemann_route_without_semigroup(self):
        cfg = small_config(noise={"hurst": 0.7}, operator={"spectrum": "zero"},
                           monte_carlo={"replicas": 2000, "route": "riemann"})
        report = validation.validate_experiment(experiment.build(cfg))
        assert report.passed, report.summary()
        assert set(report.methods) == {RIEMANN}

    def test_chunking_does_not_change_samples(self, monkeypatch):
        setup = experiment.build(small_config())
        whole = validation.run_monte_carlo(setup, 50, route=RIEMANN)
        monkeypatch.setenv("FVSIM_CHUNK_SIZE", "7")
        chunked = validation.run_monte_carlo(setup, 50, route=RIEMANN)
        m = setup.grid.n
        np.testing.assert_allclose(chunked[m].covariance(), whole[m].covariance(), rtol=1e-9)

    def test_repeated_replica_ids(self):
        setup = experiment.build(small_config())
        acc = validation.run_monte_carlo(setup, 2, route=EXACT_GAUSSIAN, replica_ids=[3, 3])
        assert not acc[setup.grid.n].covariance().any()

    def test_needs_two_replicas(self):
        setup = experiment.build(small_config())
        with pytest.raises(DomainError):
            validation.run_monte_carlo(setup, 1)


class TestWeakResidual:
    def test_deterministic_path(self):
        setup = experiment.build(small_config())
        noise = HilbertPath.zeros(setup.grid, 3, 0.5)
        x = simulate_weak_solution([1.0, -1.0, 0.5], setup.table, setup.F, noise)
        for k in range(3):
            assert validation.weak_residual(x, noise, setup.model, setup.kernel, k, 1.0) < 1e-10

    def test_noisy_residual_shrinks_with_grid(self):
        means = []
        for n in (64, 256):
            setup = experiment.build(small_config(grid={"n": n}, noise={"K": 1}))
            res = []
            for r in range(20):
                noise = sample_hilbert_fbm(setup.model, setup.grid, 0.5, seed=21, replica=r)
                x = simulate_weak_solution([1.0], setup.table, setup.F, noise)
                res.append(validation.weak_residual(x, noise, setup.model, setup.kernel, 0, 1.0))
            means.append(np.mean(res))
        assert means[1] < 0.5 * means[0]


class TestConvergence:
    def test_measured_order(self):
        assert validation.measured_order([64, 128, 256], [1e-2, 5e-3, 2.5e-3]) == pytest.approx([1.0, 1.0])

    def test_riemann_bias_is_first_order(self):
        df = validation.riemann_convergence_table(small_config(), ns=(32, 64, 128), reference_n=256)
        assert list(df.columns) == ["n", "abs_error", "rel_error", "order"]
        assert df["abs_error"].is_monotonic_decreasing
        assert all(0.7 < o < 1.3 for o in df["order"].iloc[1:])

    def test_refinement_steps(self):
        assert validation.refinement_steps(small_config()) == [16, 32, 64]
        assert validation.refinement_steps(small_config(grid={"n": 2})) == [1, 2]

    def test_weak_residual_is_first_order(self):
        # constant memory kernel: the residual is |mu| h/2 |B(t)| exactly
        df = validation.weak_residual_table(small_config(noise={"K": 1}), ns=(32, 128), replicas=64)
        assert list(df.columns) == ["n", "residual", "order"]
        assert df["residual"].iloc[0] == pytest.approx(np.sqrt(2.0 / np.pi) / 64, rel=0.35)
        assert df["order"].iloc[1] == pytest.approx(1.0, abs=0.4)
