"""
Riemann-Liouville fractional integrals and derivatives on uniform grids.

Integrals use product integration: the sampled function is replaced by its
piecewise-linear interpolant and the kernel (x - y)^(alpha-1) / Gamma(alpha)
is integrated exactly against it on every cell. Derivatives integrate to
order ceil(alpha) - alpha and then differentiate ceil(alpha) times.

Right-sided operators are the left-sided ones conjugated by time reversal,
which also fixes the sign (-d/dx)^m of the right derivative.

Functions of several components carry time on the last axis, so every
operator here acts componentwise on arrays of shape (K, n+1).
"""

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy import special

from src.errors import DomainError, FractionalAccuracyWarning, GridMismatchError
from src.fbm import TimeGrid, hurst_value

LEFT = "left"
RIGHT = "right"


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """Node values of a (possibly vector-valued) function; piecewise-linear in between."""

    grid: TimeGrid
    values: np.ndarray
    low_accuracy: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 0 or values.shape[-1] != self.grid.size:
            raise GridMismatchError(
                f"expected {self.grid.size} node values on the last axis, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise DomainError("sampled function values must be finite")
        object.__setattr__(self, "values", values)
        if self.low_accuracy is not None:
            object.__setattr__(self, "low_accuracy", np.asarray(self.low_accuracy, dtype=bool))

    @classmethod
    def from_callable(cls, grid: TimeGrid, fn: Callable[[np.ndarray], np.ndarray]) -> "SampledFunction":
        nodes = grid.nodes
        return cls(grid, np.broadcast_to(fn(nodes), nodes.shape).copy())

    @classmethod
    def constant(cls, grid: TimeGrid, c: float = 1.0) -> "SampledFunction":
        return cls(grid, np.full(grid.size, float(c)))

    @property
    def is_vector(self) -> bool:
        return self.values.ndim > 1

    def with_values(self, values, low_accuracy=None) -> "SampledFunction":
        return SampledFunction(self.grid, values, low_accuracy)

    def reversed(self) -> "SampledFunction":
        mask = None if self.low_accuracy is None else self.low_accuracy[::-1]
        return SampledFunction(self.grid, self.values[..., ::-1].copy(), mask)

    def restrict(self, m: int) -> "SampledFunction":
        """Values on the first m steps (horizon t_m)."""
        mask = None if self.low_accuracy is None else self.low_accuracy[: m + 1]
        return SampledFunction(self.grid.restrict(m), self.values[..., : m + 1].copy(), mask)

    def up_to(self, t: float) -> "SampledFunction":
        m = self.grid.node_index(t)
        if m == self.grid.n:
            return self
        if m == 0:
            raise DomainError("cannot restrict a function to the degenerate interval [0, 0]")
        return self.restrict(m)

    def component(self, i: int) -> "SampledFunction":
        return SampledFunction(self.grid, self.values[i])


def _require_same_grid(*fns: SampledFunction) -> TimeGrid:
    grid = fns[0].grid
    for f in fns[1:]:
        if not grid.matches(f.grid):
            raise GridMismatchError(
                f"grids differ: (T={grid.T}, n={grid.n}) vs (T={f.grid.T}, n={f.grid.n})"
            )
    return grid


@lru_cache(maxsize=32)
def _left_integral_pattern(n: int, alpha: float) -> np.ndarray:
    """Unscaled product-integration weights a[j, k]; I^alpha f(t_j) = h^alpha / Gamma(alpha+2) * sum_k a[j, k] f_k."""
    a1 = alpha + 1.0
    d = np.arange(n + 1, dtype=float)
    interior = np.empty(n + 1)
    interior[0] = 1.0
    interior[1:] = (d[1:] + 1.0) ** a1 - 2.0 * d[1:] ** a1 + (d[1:] - 1.0) ** a1

    j = np.arange(n + 1)
    lag = j[:, None] - j[None, :]
    weights = np.where(lag >= 0, interior[np.clip(lag, 0, n)], 0.0)
    weights[1:, 0] = (d[1:] - 1.0) ** a1 - (d[1:] - 1.0 - alpha) * d[1:] ** alpha
    weights[0, :] = 0.0
    weights.setflags(write=False)
    return weights


def left_integral_weights(grid: TimeGrid, alpha: float) -> np.ndarray:
    """Lower-triangular matrix W with (I_{0+}^alpha f)(t_j) = (W f)_j."""
    return _left_integral_pattern(grid.n, float(alpha)) * (grid.h ** alpha / math.gamma(alpha + 2.0))


def frac_integral_left(f: SampledFunction, alpha: float) -> SampledFunction:
    """(I_{0+}^alpha f) at every node by product integration; node t_0 is 0."""
    if not alpha > 0:
        raise DomainError(f"integral order must be positive, got {alpha}")
    weights = left_integral_weights(f.grid, alpha)
    return f.with_values(f.values @ weights.T)


def frac_integral_right(f: SampledFunction, alpha: float) -> SampledFunction:
    """(I_{b-}^alpha f) at every node; node t_n is 0."""
    return frac_integral_left(f.reversed(), alpha).reversed()


def _differentiate(values: np.ndarray, h: float, times: int) -> np.ndarray:
    for _ in range(times):
        values = np.gradient(values, h, axis=-1, edge_order=2)
    return values


def frac_derivative_left(f: SampledFunction, alpha: float) -> SampledFunction:
    """
    (D_{0+}^alpha f) = (d/dx)^m I^{m-alpha} f with m = ceil(alpha).

    For 0 < alpha < 1 the constant f(0) is split off and differentiated in
    closed form, f(0) x^(-alpha) / Gamma(1-alpha). That term is unbounded at
    x = 0, so node t_0 carries only the regular part and is flagged in
    low_accuracy; a FractionalAccuracyWarning is issued when f(0) != 0.
    """
    if not alpha > 0:
        raise DomainError(f"derivative order must be positive, got {alpha}")
    grid = f.grid
    m = math.ceil(alpha)
    mask = np.zeros(grid.size, dtype=bool)
    mask[[0, -1]] = True

    if alpha < 1.0:
        f0 = f.values[..., :1]
        regular = f.values - f0
        integrated = regular @ left_integral_weights(grid, 1.0 - alpha).T
        out = _differentiate(integrated, grid.h, 1)
        x = grid.nodes[1:]
        out[..., 1:] += f0 * x ** (-alpha) / math.gamma(1.0 - alpha)
        if np.any(f0 != 0.0):
            warnings.warn(
                f"D^{alpha} of a function with f(0) != 0 is unbounded at x = 0; node 0 holds the regular part only",
                FractionalAccuracyWarning,
                stacklevel=2,
            )
        return f.with_values(out, mask)

    if m == alpha:
        integrated = f.values
    else:
        integrated = f.values @ left_integral_weights(grid, m - alpha).T
    return f.with_values(_differentiate(integrated, grid.h, m), mask)


def frac_derivative_right(f: SampledFunction, alpha: float) -> SampledFunction:
    """(D_{b-}^alpha f) = (-d/dx)^m I_{b-}^{m-alpha} f, by reflection of the left derivative."""
    return frac_derivative_left(f.reversed(), alpha).reversed()


def frac_op(f: SampledFunction, side: str, alpha: float) -> SampledFunction:
    """Signed-order dispatcher: alpha > 0 differentiates, alpha < 0 integrates, 0 is the identity."""
    if side not in (LEFT, RIGHT):
        raise DomainError(f"side must be '{LEFT}' or '{RIGHT}', got {side!r}")
    if not np.isfinite(alpha):
        raise DomainError(f"fractional order must be finite, got {alpha}")
    if alpha == 0:
        return f.with_values(f.values.copy(), f.low_accuracy)
    if alpha > 0:
        op = frac_derivative_left if side == LEFT else frac_derivative_right
        return op(f, alpha)
    op = frac_integral_left if side == LEFT else frac_integral_right
    return op(f, -alpha)


def frac_op_vector(F: SampledFunction, side: str, alpha: float) -> SampledFunction:
    """frac_op applied to each coordinate of a K-vector valued function (values shape (K, n+1))."""
    if F.values.ndim != 2:
        raise DomainError(f"vector-valued function must have values of shape (K, n+1), got {F.values.shape}")
    return frac_op(F, side, alpha)


# Isometry kernels  s -> (D_{t-}^{1/2-H} u^{H-1/2} f(u))(s)
@dataclass(frozen=True, eq=False)
class IsometryKernel(SampledFunction):
    """
    Kernel values K on [0, t] together with the factorization
    K(s) = s^p (t - s)^q k(s), k bounded with exact endpoint limits.

    Nodes where K itself is unbounded hold 0 and are flagged in low_accuracy;
    quadrature should use `regular` with the exponents instead.
    """

    regular: np.ndarray = field(default=None)
    p: float = 0.0
    q: float = 0.0
    hurst: float = 0.5

    @property
    def t(self) -> float:
        return self.grid.T


def _power_moments(lo: np.ndarray, hi: np.ndarray, gamma_: float):
    """Integrals of u^(gamma-1) and u^gamma over [lo, hi]."""
    m0 = (hi ** gamma_ - lo ** gamma_) / gamma_
    m1 = (hi ** (gamma_ + 1) - lo ** (gamma_ + 1)) / (gamma_ + 1)
    return m0, m1


def _persistent_kernel(f: SampledFunction, beta: float) -> IsometryKernel:
    """H > 1/2: K = I_{t-}^beta [u^beta f], beta = H - 1/2."""
    grid = f.grid
    s = grid.nodes
    t = grid.T
    weighted = f.values * s ** beta
    K = frac_integral_right(f.with_values(weighted), beta).values

    # K(0) = (1/Gamma(beta)) int_0^t u^(2 beta - 1) f(u) du, exact for the interpolant of f
    lo, hi = s[:-1], s[1:]
    m0, m1 = _power_moments(lo, hi, 2.0 * beta)
    f_lo, f_hi = f.values[..., :-1], f.values[..., 1:]
    slope = (f_hi - f_lo) / grid.h
    K[..., 0] = (f_lo * m0 + slope * (m1 - lo * m0)).sum(axis=-1) / math.gamma(beta)

    k = np.empty_like(K)
    k[..., :-1] = K[..., :-1] / (t - s[:-1]) ** beta
    k[..., -1] = t ** beta * f.values[..., -1] / math.gamma(1.0 + beta)
    return IsometryKernel(grid, K, None, regular=k, p=0.0, q=beta, hurst=0.5 + beta)


def constant_antipersistent_kernel(grid: TimeGrid, delta: float):
    """
    D_{t-}^delta [u^(-delta)] on [0, t] in closed form, returned as the bounded
    factor s^(2 delta) (t-s)^delta * K with exact endpoint limits.
    """
    t = grid.T
    s = grid.nodes
    k = np.empty(grid.size)
    inner = s[1:-1]
    w = t - inner
    z = w / t
    F1 = special.hyp2f1(delta, 1.0, 2.0 - delta, z)
    F2 = special.hyp2f1(1.0 + delta, 2.0, 3.0 - delta, z)
    K1 = (
        w ** (-delta) * t ** (-delta) * F1
        + delta * w ** (1.0 - delta) * t ** (-delta - 1.0) * F2 / ((1.0 - delta) * (2.0 - delta))
    ) / math.gamma(1.0 - delta)
    k[1:-1] = inner ** (2.0 * delta) * w ** delta * K1
    k[0] = t ** delta * math.gamma(2.0 * delta) / math.gamma(delta)
    k[-1] = t ** delta / math.gamma(1.0 - delta)
    return k


def _antipersistent_kernel(f: SampledFunction, delta: float) -> IsometryKernel:
    """
    H < 1/2: K = D_{t-}^delta [u^(-delta) f], delta = 1/2 - H.

    Split as f(0) K_1 + a phi + Q with K_1 the closed-form kernel of the
    constant, a = t^(-delta) (f(t) - f(0)), phi = (t-s)^(-delta) / Gamma(1-delta),
    and Q the derivative of the remainder u^(-delta) (f - f(0)) - a, which
    vanishes at u = t.
    """
    grid = f.grid
    s = grid.nodes
    t = grid.T
    f0 = f.values[..., :1]
    ft = f.values[..., -1:]
    a = t ** (-delta) * (ft - f0)

    g2 = np.zeros_like(f.values)
    g2[..., 1:] = s[1:] ** (-delta) * (f.values[..., 1:] - f0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FractionalAccuracyWarning)
        Q = frac_derivative_right(f.with_values(g2 - a), delta).values

    k1 = constant_antipersistent_kernel(grid, delta)
    k = np.empty(np.broadcast_shapes(f.values.shape, k1.shape))
    inner = s[1:-1]
    w = t - inner
    phi = w ** (-delta) / math.gamma(1.0 - delta)
    k[..., 1:-1] = (
        f0 * k1[1:-1]
        + inner ** (2.0 * delta) * w ** delta * (a * phi + Q[..., 1:-1])
    )
    k[..., 0] = f0[..., 0] * k1[0]
    k[..., -1] = ft[..., 0] * t ** delta / math.gamma(1.0 - delta)

    K = np.zeros_like(k)
    K[..., 1:-1] = k[..., 1:-1] / (inner ** (2.0 * delta) * w ** delta)
    mask = np.zeros(grid.size, dtype=bool)
    mask[[0, -1]] = True
    return IsometryKernel(grid, K, mask, regular=k, p=-2.0 * delta, q=-delta, hurst=0.5 - delta)


def isometry_kernel(f: SampledFunction, H, t: Optional[float] = None) -> IsometryKernel:
    """
    s -> (D_{t-}^{1/2-H} u^{H-1/2} f(u))(s) on [0, t].

    H = 1/2 returns f; H > 1/2 is a right integral of order H - 1/2 and is
    bounded; H < 1/2 is a right derivative of order 1/2 - H and is unbounded
    at both ends of [0, t].
    """
    Hv = hurst_value(H)
    if t is not None:
        f = f.up_to(t)
    if Hv == 0.5:
        return IsometryKernel(f.grid, f.values.copy(), None, regular=f.values.copy(), hurst=0.5)
    if Hv > 0.5:
        return _persistent_kernel(f, Hv - 0.5)
    return _antipersistent_kernel(f, 0.5 - Hv)


# Weighted product integration  int_0^t s^P (t-s)^Q g(s) ds
def _beta_cell_masses(x: np.ndarray, a: float, b: float) -> np.ndarray:
    """Differences of the regularized incomplete beta I_x(a, b) between consecutive x, accurate near x = 1."""
    lower = special.betainc(a, b, x)
    upper = special.betainc(b, a, 1.0 - x)
    lo_cells = np.diff(lower)
    hi_cells = -np.diff(upper)
    use_upper = x[:-1] >= 0.5
    return np.where(use_upper, hi_cells, lo_cells)


@lru_cache(maxsize=64)
def _weighted_pattern(n: int, P: float, Q: float) -> np.ndarray:
    """Weights for T = 1; the grid horizon enters as t^(P+Q+1)."""
    if P == 0.0 and Q == 0.0:
        w = np.full(n + 1, 1.0 / n)
        w[[0, -1]] = 0.5 / n
        return w
    x = np.linspace(0.0, 1.0, n + 1)
    h = 1.0 / n
    mass0 = special.beta(P + 1.0, Q + 1.0) * _beta_cell_masses(x, P + 1.0, Q + 1.0)
    mass1 = special.beta(P + 2.0, Q + 1.0) * _beta_cell_masses(x, P + 2.0, Q + 1.0)
    # int over cell of weight * (x - x_c)/h
    ramp = (mass1 - x[:-1] * mass0) / h
    w = np.zeros(n + 1)
    w[:-1] += mass0 - ramp
    w[1:] += ramp
    w.setflags(write=False)
    return w


def weighted_quadrature_weights(grid: TimeGrid, P: float, Q: float) -> np.ndarray:
    """
    Vector w with sum_j w_j g(t_j) = int_0^T s^P (T-s)^Q g~(s) ds for the
    piecewise-linear interpolant g~; exact cell moments via incomplete Beta.
    P = Q = 0 is the trapezoid rule.
    """
    if P <= -1.0 or Q <= -1.0:
        raise DomainError(f"weight s^{P} (t-s)^{Q} is not integrable")
    return _weighted_pattern(grid.n, float(P), float(Q)) * grid.T ** (P + Q + 1.0)
