"""
Analytic covariances of fBm stochastic integrals.

Fractional form (any H):
    c(H) int_0^t s^(1-2H) (K f)(s) (K g)(s) ds,   K f = D_{t-}^{1/2-H}[u^(H-1/2) f]
Double-integral form (H > 1/2):
    int_0^T int_0^T f(s) g(u) H(2H-1)|s-u|^(2H-2) ds du
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import linalg, special

import config
from src.errors import DomainError, InternalConsistencyError, PSDRepairError, UnsupportedError
from src.fbm import TimeGrid, hurst_value
from src.fraccalc import SampledFunction, isometry_kernel, weighted_quadrature_weights
from src.resolvent import ResolventTable
from src.spectral import OperatorField, SpectralModel


@dataclass(frozen=True)
class IsometryConstant:
    H: float
    value: float


def c_of_H(H) -> float:
    """2H Gamma(3/2-H) Gamma(H+1/2) / Gamma(2-2H); exactly 1 at H = 1/2."""
    Hv = hurst_value(H)
    return 2.0 * Hv * math.gamma(1.5 - Hv) * math.gamma(Hv + 0.5) / math.gamma(2.0 - 2.0 * Hv)


def isometry_constant(H) -> IsometryConstant:
    Hv = hurst_value(H)
    return IsometryConstant(Hv, c_of_H(Hv))


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    """K x K covariance at time t. Cross covariances (F != G, or t != t') skip the symmetry/PSD checks."""

    t: float
    entries: np.ndarray
    H: float
    kernel: str = ""
    t2: Optional[float] = None
    cross: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        entries = np.atleast_2d(np.asarray(self.entries, dtype=float))
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise DomainError(f"covariance must be square, got shape {entries.shape}")
        object.__setattr__(self, "entries", entries)
        if not self.cross:
            check_covariance(entries)

    @property
    def K(self) -> int:
        return self.entries.shape[0]

    def scaled(self, factor: float) -> "CovarianceMatrix":
        return CovarianceMatrix(self.t, factor * self.entries, self.H, self.kernel, self.t2, self.cross,
                                dict(self.metadata))


def check_covariance(entries: np.ndarray) -> None:
    """Symmetric to 1e-12 relative and PSD down to -1e-8 x spectral radius."""
    scale = np.abs(entries).max()
    if scale == 0.0:
        return
    asym = np.abs(entries - entries.T).max()
    if asym > config.COVARIANCE_SYMMETRY_TOL * scale:
        raise InternalConsistencyError(f"covariance is not symmetric (max asymmetry {asym:.3e})")
    w = linalg.eigvalsh(0.5 * (entries + entries.T))
    radius = np.abs(w).max()
    if w.min() < -config.COVARIANCE_PSD_TOL * radius:
        raise PSDRepairError(f"covariance has eigenvalue {w.min():.3e} (spectral radius {radius:.3e})")


# Fractional form
def _kernel_weights(kernel, H: float) -> np.ndarray:
    """Quadrature weights for int s^(1-2H) K_f K_g, acting on products of regular parts."""
    P = 1.0 - 2.0 * H + 2.0 * kernel.p
    Q = 2.0 * kernel.q
    return weighted_quadrature_weights(kernel.grid, P, Q)


def scalar_isometry_frac(f: SampledFunction, g: SampledFunction, H, t: Optional[float] = None) -> float:
    """c(H) int_0^t s^(1-2H) (K f)(s) (K g)(s) ds with exact singular-weight moments at both ends."""
    Hv = hurst_value(H)
    t = f.grid.T if t is None else t
    kf = isometry_kernel(f, Hv, t)
    kg = kf if g is f else isometry_kernel(g, Hv, t)
    w = _kernel_weights(kf, Hv)
    return c_of_H(Hv) * float(np.dot(w, kf.regular * kg.regular))


# Double-integral form
_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(10)
_GAUSS_X = 0.5 * (_GAUSS_X + 1.0)
_GAUSS_W = 0.5 * _GAUSS_W


def _cell_moments_exact(d: np.ndarray, H: float):
    """int_0^1 int_0^1 {1, x, y, xy} H(2H-1)|d+x-y|^(2H-2) dx dy from antiderivatives in z."""
    a = 2.0 * H

    def phi2(z):
        return 0.5 * np.abs(z) ** a

    def phi3(z):
        return np.sign(z) * np.abs(z) ** (a + 1.0) / (2.0 * (a + 1.0))

    def phi4(z):
        return np.abs(z) ** (a + 2.0) / (2.0 * (a + 1.0) * (a + 2.0))

    m00 = phi2(d + 1) - 2.0 * phi2(d) + phi2(d - 1)
    m10 = (phi2(d + 1) - phi2(d)) - (phi3(d + 1) - phi3(d)) + (phi3(d) - phi3(d - 1))
    m01 = (-phi2(d) + phi3(d + 1) - phi3(d)) - (-phi2(d - 1) + phi3(d) - phi3(d - 1))
    m11 = (
        (-phi2(d) + phi3(d + 1) - phi3(d))
        - (-phi3(d) + phi4(d + 1) - phi4(d))
        + (-phi3(d - 1) + phi4(d) - phi4(d - 1))
    )
    return m00, m10, m01, m11


def _cell_moments_gauss(d: np.ndarray, H: float):
    """Same moments by tensor Gauss-Legendre; the integrand is smooth once |d| >= 2."""
    x = _GAUSS_X[None, :, None]
    y = _GAUSS_X[None, None, :]
    w = (_GAUSS_W[:, None] * _GAUSS_W[None, :])[None]
    theta = H * (2.0 * H - 1.0) * np.abs(d[:, None, None] + x - y) ** (2.0 * H - 2.0)
    tw = theta * w
    return (
        tw.sum(axis=(1, 2)),
        (tw * x).sum(axis=(1, 2)),
        (tw * y).sum(axis=(1, 2)),
        (tw * x * y).sum(axis=(1, 2)),
    )


@lru_cache(maxsize=32)
def _bilinear_cell_weights(lo: int, hi: int, H: float):
    """A_ab(d), d = lo..hi: moments of H(2H-1)|d+x-y|^(2H-2) against hat functions (1-x or x) x (1-y or y)."""
    d = np.arange(lo, hi + 1, dtype=float)
    near = np.abs(d) <= 1
    moments = [np.empty_like(d) for _ in range(4)]
    for dst, src in zip(moments, _cell_moments_exact(d[near], H)):
        dst[near] = src
    if np.any(~near):
        for dst, src in zip(moments, _cell_moments_gauss(d[~near], H)):
            dst[~near] = src
    m00, m10, m01, m11 = moments
    return {
        (0, 0): m00 - m10 - m01 + m11,
        (1, 0): m10 - m11,
        (0, 1): m01 - m11,
        (1, 1): m11,
    }


def double_form_matrix(f_values: np.ndarray, g_values: np.ndarray, h: float, H: float) -> np.ndarray:
    """
    Bilinear double integral on [0, t] x [0, t'] for rows of f (on [0, t]) and g (on [0, t']).
    Returns an array of shape (rows of f, rows of g).
    """
    F = np.atleast_2d(f_values)
    G = np.atleast_2d(g_values)
    ms = F.shape[-1] - 1
    mu = G.shape[-1] - 1
    A = _bilinear_cell_weights(-(mu - 1), ms - 1, H)
    zero = mu - 1  # position of d = 0
    out = np.zeros((F.shape[0], G.shape[0]))
    for (a, b), vals in A.items():
        col = vals[zero:zero + ms]
        row = vals[zero::-1][:mu]
        T = linalg.toeplitz(col, row)
        Fa = F[:, a:a + ms]
        Gb = G[:, b:b + mu]
        out += Fa @ T @ Gb.T
    return h ** (2.0 * H) * out


def scalar_isometry_double(f: SampledFunction, g: SampledFunction, H, T: Optional[float] = None) -> float:
    """int_0^T int_0^T f(s) g(u) theta_H(s, u) ds du for H > 1/2, exact per-cell moments on the diagonal band."""
    Hv = hurst_value(H)
    if Hv <= 0.5:
        raise DomainError(f"double-integral form requires H > 1/2, got {Hv}")
    if T is not None:
        f = f.up_to(T)
        g = g.up_to(T)
    h = f.grid.h
    forward = double_form_matrix(f.values, g.values, h, Hv)[0, 0]
    backward = double_form_matrix(g.values, f.values, h, Hv)[0, 0]
    return float(0.5 * (forward + backward))


def monomial_double_integral(a: float, b: float, H, t: float) -> float:
    """Closed form of int_0^t int_0^t s^a u^b theta_H(s, u) ds du (H > 1/2)."""
    Hv = hurst_value(H)
    if Hv <= 0.5:
        raise DomainError(f"monomial double integral requires H > 1/2, got {Hv}")
    e = 2.0 * Hv - 1.0
    total = a + b + 2.0 * Hv
    return Hv * e * (special.beta(b + 1.0, e) + special.beta(a + 1.0, e)) * t ** total / total


# Operator-valued covariances
def _field_kernels(coeffs: np.ndarray, grid: TimeGrid, H: float):
    """Isometry kernels of every entry f_ij of a (K, K, m+1) coefficient array."""
    K = coeffs.shape[0]
    flat = SampledFunction(grid, coeffs.reshape(K * K, -1))
    kern = isometry_kernel(flat, H)
    return kern, kern.regular.reshape(K, K, -1)


def _isometry_from_coefficients(cf: np.ndarray, cg: Optional[np.ndarray], grid: TimeGrid,
                                lam: np.ndarray, H: float) -> np.ndarray:
    kern, kf = _field_kernels(cf, grid, H)
    kg = kf if cg is None else _field_kernels(cg, grid, H)[1]
    w = _kernel_weights(kern, H)
    out = c_of_H(H) * np.einsum("ijs,s,j,pjs->ip", kf, w, lam, kg, optimize=True)
    if cg is None:
        out = 0.5 * (out + out.T)
    return out


def operator_isometry(F: OperatorField, G: OperatorField, model: SpectralModel, H, t: float) -> CovarianceMatrix:
    """
    Entry (i, i') = c(H) sum_j lambda_j int_0^t s^(1-2H) (K f_ij)(s) (K g_i'j)(s) ds.
    Passing the same field twice yields a checked symmetric PSD matrix.
    """
    Hv = hurst_value(H)
    if F.K != model.K or G.K != model.K:
        raise DomainError(f"operator fields must have K={model.K} modes")
    m = F.grid.node_index(t)
    if m == 0:
        return CovarianceMatrix(0.0, np.zeros((model.K, model.K)), Hv, cross=F is not G)
    grid = F.grid.restrict(m) if m < F.grid.n else F.grid
    cf = F.coefficients()[:, :, : m + 1]
    same = F is G
    cg = None if same else G.coefficients()[:, :, : m + 1]
    entries = _isometry_from_coefficients(cf, cg, grid, model.lam, Hv)
    return CovarianceMatrix(float(t), entries, Hv, cross=not same)


def _assembled_coefficients(table: ResolventTable, F: OperatorField, t: float) -> np.ndarray:
    """s_i(t - s) F_ij(s) on the nodes of [0, t], shape (K, K, m+1)."""
    m = F.grid.node_index(t)
    lagged = table.lagged(t)
    return lagged[:, None, :] * F.coefficients()[:, :, : m + 1]


def _check_adjoint_ordering(table: ResolventTable, F: OperatorField, t: float, grid: TimeGrid,
                            H: float, kernels: np.ndarray, samples: int = 4) -> None:
    """
    Rebuilds a few kernel entries from the transposed coefficient array and
    compares them with the assembled ones. In the diagonal model both orderings
    reduce to F_ij s_i, so this catches assembly index errors only.
    """
    m = grid.n
    lagged = table.lagged(t)
    coeffs = F.coefficients()[:, :, : m + 1]
    K = coeffs.shape[0]
    pairs = [(i, j) for i in range(K) for j in range(K) if np.any(coeffs[i, j])][:samples]
    if not pairs:
        return
    # (F* S*)_{ji} = F_ij s_i, transposed back to position (i, j)
    adjoint_rows = np.stack([(coeffs.transpose(1, 0, 2)[j, i] * lagged[i]) for i, j in pairs])
    other = isometry_kernel(SampledFunction(grid, adjoint_rows), H).regular
    direct = np.stack([kernels[i, j] for i, j in pairs])
    scale = max(np.abs(direct).max(), 1.0)
    gap = np.abs(other - direct).max()
    if gap > config.ADJOINT_IDENTITY_TOL * scale:
        raise InternalConsistencyError(f"adjoint ordering differs by {gap:.3e} at t={t}")


def convolution_covariance(table: ResolventTable, F: OperatorField, model: SpectralModel, H, t: float) -> CovarianceMatrix:
    """Covariance of X_S^F(t): the fractional form with f_ij(s) = s_i(t - s) F_ij(s)."""
    Hv = hurst_value(H)
    if not table.grid.matches(F.grid):
        raise DomainError("resolvent table and operator field must share a grid")
    m = F.grid.node_index(t)
    if m == 0:
        return CovarianceMatrix(0.0, np.zeros((model.K, model.K)), Hv, table.kernel.describe())
    grid = F.grid.restrict(m) if m < F.grid.n else F.grid
    coeffs = _assembled_coefficients(table, F, t)
    kern, kf = _field_kernels(coeffs, grid, Hv)
    _check_adjoint_ordering(table, F, t, grid, Hv, kf)
    w = _kernel_weights(kern, Hv)
    entries = c_of_H(Hv) * np.einsum("ijs,s,j,pjs->ip", kf, w, model.lam, kf, optimize=True)
    entries = 0.5 * (entries + entries.T)
    return CovarianceMatrix(float(t), entries, Hv, table.kernel.describe())


def two_time_covariance(table: ResolventTable, F: OperatorField, model: SpectralModel, H,
                        t: float, t2: float) -> CovarianceMatrix:
    """E[X(t) (x) X(t')] for H > 1/2 via the double-integral form with indicator-truncated integrands."""
    Hv = hurst_value(H)
    if Hv <= 0.5:
        raise UnsupportedError(f"two-time covariance is implemented for H > 1/2 only, got {Hv}")
    K = model.K
    m1 = F.grid.node_index(t)
    m2 = F.grid.node_index(t2)
    if m1 == 0 or m2 == 0:
        return CovarianceMatrix(float(t), np.zeros((K, K)), Hv, table.kernel.describe(), float(t2), cross=True)
    c1 = _assembled_coefficients(table, F, t).reshape(K * K, -1)
    c2 = _assembled_coefficients(table, F, t2).reshape(K * K, -1)
    full = double_form_matrix(c1, c2, F.grid.h, Hv).reshape(K, K, K, K)
    # sum over the shared noise mode j of lambda_j * E[(i, j) (p, j)]
    entries = np.einsum("ijpj,j->ip", full, model.lam)
    if m1 == m2:
        entries = 0.5 * (entries + entries.T)
    return CovarianceMatrix(float(t), entries, Hv, table.kernel.describe(), float(t2), cross=m1 != m2)
