"""Isometry constant, scalar isometry forms and operator-valued covariances."""

import math

import numpy as np
import pytest

from src.covariance import (
    CovarianceMatrix,
    _assembled_coefficients,
    _check_adjoint_ordering,
    _field_kernels,
    c_of_H,
    convolution_covariance,
    isometry_constant,
    monomial_double_integral,
    operator_isometry,
    scalar_isometry_double,
    scalar_isometry_frac,
    two_time_covariance,
)
from src.errors import DomainError, InternalConsistencyError, PSDRepairError, UnsupportedError
from src.fbm import TimeGrid, fbm_covariance
from src.fraccalc import SampledFunction
from src.resolvent import Kernel, build_resolvent_table
from src.spectral import OperatorField, SpectralModel


def monomial(grid, k):
    return SampledFunction.from_callable(grid, lambda x: x ** k)


class TestIsometryConstant:
    def test_brownian(self):
        assert c_of_H(0.5) == 1.0

    def test_known_value(self):
        H = 0.75
        want = 1.5 * math.gamma(0.75) * math.gamma(1.25) / math.gamma(0.5)
        assert c_of_H(H) == pytest.approx(want)

    def test_anti_persistent_value(self):
        assert c_of_H(0.25) == pytest.approx(math.sqrt(2.0 * math.pi) / 4.0, rel=1e-13)
        assert c_of_H(0.25) == pytest.approx(0.62665706865775, rel=1e-12)

    def test_record(self):
        record = isometry_constant(0.75)
        assert record.H == 0.75
        assert record.value == c_of_H(0.75)


class TestCovarianceMatrix:
    def test_symmetry_checked(self):
        with pytest.raises(InternalConsistencyError):
            CovarianceMatrix(1.0, np.array([[1.0, 0.2], [0.1, 1.0]]), 0.5)

    def test_psd_checked(self):
        with pytest.raises(PSDRepairError):
            CovarianceMatrix(1.0, np.array([[1.0, 2.0], [2.0, 1.0]]), 0.5)

    def test_cross_is_unchecked(self):
        c = CovarianceMatrix(1.0, np.array([[1.0, 0.2], [0.1, 1.0]]), 0.5, cross=True)
        assert c.K == 2
        np.testing.assert_allclose(c.scaled(2.0).entries, 2.0 * c.entries)


class TestScalarIsometry:
    @pytest.mark.parametrize("H,n,tol", [(0.25, 1024, 1e-3), (0.4, 512, 1e-3), (0.5, 256, 1e-12),
                                         (0.7, 1024, 1e-3), (0.9, 1024, 1e-3)])
    def test_constant_closes_to_variance(self, H, n, tol):
        g = TimeGrid(1.0, n)
        one = SampledFunction.constant(g, 1.0)
        assert scalar_isometry_frac(one, one, H) == pytest.approx(1.0, rel=tol)

    def test_horizon_scaling(self):
        g = TimeGrid(2.0, 1024)
        one = SampledFunction.constant(g, 1.0)
        assert scalar_isometry_frac(one, one, 0.7, t=1.0) == pytest.approx(1.0, rel=2e-3)
        assert scalar_isometry_frac(one, one, 0.7) == pytest.approx(2.0 ** 1.4, rel=2e-3)

    def test_brownian_is_l2(self, grid):
        f, g = monomial(grid, 1), monomial(grid, 2)
        assert scalar_isometry_frac(f, g, 0.5) == pytest.approx(0.25, rel=1e-4)

    @pytest.mark.parametrize("a,b", [(0, 0), (1, 1), (1, 2), (0, 2)])
    def test_double_form_matches_closed_form(self, a, b):
        g = TimeGrid(1.0, 256)
        got = scalar_isometry_double(monomial(g, a), monomial(g, b), 0.7)
        assert got == pytest.approx(monomial_double_integral(a, b, 0.7, 1.0), rel=1e-4)

    def test_double_form_constant_is_exact(self, grid):
        one = SampledFunction.constant(grid, 1.0)
        assert scalar_isometry_double(one, one, 0.8) == pytest.approx(1.0, rel=1e-9)

    def test_double_form_is_symmetric(self, grid):
        f, g = monomial(grid, 1), SampledFunction.from_callable(grid, np.cos)
        assert scalar_isometry_double(f, g, 0.7) == scalar_isometry_double(g, f, 0.7)

    @pytest.mark.parametrize("a,b", [(1, 1), (1, 2)])
    def test_fractional_and_double_forms_agree(self, a, b):
        g = TimeGrid(1.0, 512)
        f1, f2 = monomial(g, a), monomial(g, b)
        frac = scalar_isometry_frac(f1, f2, 0.75)
        double = scalar_isometry_double(f1, f2, 0.75)
        assert frac == pytest.approx(double, rel=1e-3)

    def test_double_form_domain(self, grid):
        one = SampledFunction.constant(grid, 1.0)
        with pytest.raises(DomainError):
            scalar_isometry_double(one, one, 0.4)
        with pytest.raises(DomainError):
            monomial_double_integral(0, 0, 0.5, 1.0)


class TestOperatorCovariance:
    def test_identity_field_is_diagonal_noise(self):
        g = TimeGrid(1.0, 1024)
        model = SpectralModel(3, np.array([1.0, 0.5, 0.2]), np.zeros(3))
        F = OperatorField.identity(g, 3)
        cov = operator_isometry(F, F, model, 0.7, 0.5)
        np.testing.assert_allclose(cov.entries, np.diag(model.lam) * 0.5 ** 1.4, rtol=1e-3, atol=1e-12)
        assert not cov.cross

    def test_distinct_fields_are_cross(self, grid):
        model = SpectralModel(2, np.array([1.0, 1.0]), np.zeros(2))
        F = OperatorField.identity(grid, 2)
        G = OperatorField.constant(grid, [[0.0, 1.0], [1.0, 0.0]])
        cov = operator_isometry(F, G, model, 0.5, 1.0)
        assert cov.cross
        np.testing.assert_allclose(cov.entries, [[0.0, 1.0], [1.0, 0.0]], atol=1e-12)

    def test_zero_time(self, grid):
        model = SpectralModel(2, np.ones(2), np.zeros(2))
        F = OperatorField.identity(grid, 2)
        assert not operator_isometry(F, F, model, 0.7, 0.0).entries.any()

    def test_heat_modes(self):
        g = TimeGrid(1.0, 256)
        mu = np.array([-1.0, -4.0])
        model = SpectralModel(2, np.array([1.0, 0.25]), mu)
        table = build_resolvent_table(mu, Kernel.power(1.0), g)
        cov = convolution_covariance(table, OperatorField.identity(g, 2), model, 0.5, 1.0)
        want = model.lam * (1.0 - np.exp(2.0 * mu)) / (-2.0 * mu)
        np.testing.assert_allclose(np.diag(cov.entries), want, rtol=1e-3)
        assert cov.entries[0, 1] == pytest.approx(0.0, abs=1e-12)
        assert cov.kernel == "power(alpha=1)"

    @pytest.mark.parametrize("H", [0.3, 0.7])
    def test_trivial_semigroup_gives_fbm_variance(self, H):
        g = TimeGrid(1.0, 512)
        model = SpectralModel(2, np.array([1.0, 0.5]), np.zeros(2))
        table = build_resolvent_table(model.mu, Kernel.power(1.0), g)
        cov = convolution_covariance(table, OperatorField.identity(g, 2), model, H, 1.0)
        np.testing.assert_allclose(np.diag(cov.entries), model.lam, rtol=2e-3)

    def test_ou_forms_agree(self):
        g = TimeGrid(1.0, 512)
        model = SpectralModel(1, np.array([1.0]), np.array([-1.0]))
        table = build_resolvent_table(model.mu, Kernel.constant(1.0), g)
        F = OperatorField.identity(g, 1)
        frac = convolution_covariance(table, F, model, 0.7, 1.0).entries[0, 0]
        double = two_time_covariance(table, F, model, 0.7, 1.0, 1.0).entries[0, 0]
        assert frac == pytest.approx(double, rel=1e-3)

    def test_ordering_check_catches_swapped_modes(self):
        g = TimeGrid(1.0, 64)
        table = build_resolvent_table([-1.0, -4.0], Kernel.power(1.0), g)
        F = OperatorField.diagonal_constant(g, [1.0, 2.0])
        _, kernels = _field_kernels(_assembled_coefficients(table, F, 1.0), g, 0.7)
        _check_adjoint_ordering(table, F, 1.0, g, 0.7, kernels)
        with pytest.raises(InternalConsistencyError):
            _check_adjoint_ordering(table, F, 1.0, g, 0.7, kernels[::-1, ::-1])


class TestTwoTime:
    def test_fbm_covariance_recovered(self, grid):
        model = SpectralModel(1, np.array([2.0]), np.zeros(1))
        table = build_resolvent_table(model.mu, Kernel.power(1.0), grid)
        F = OperatorField.identity(grid, 1)
        cov = two_time_covariance(table, F, model, 0.7, 0.25, 0.75)
        assert cov.cross and cov.t2 == 0.75
        assert cov.entries[0, 0] == pytest.approx(2.0 * fbm_covariance(0.25, 0.75, 0.7), rel=1e-9)

    def test_needs_persistent_noise(self, grid):
        model = SpectralModel(1, np.ones(1), np.zeros(1))
        table = build_resolvent_table(model.mu, Kernel.power(1.0), grid)
        with pytest.raises(UnsupportedError):
            two_time_covariance(table, OperatorField.identity(grid, 1), model, 0.5, 0.5, 1.0)
