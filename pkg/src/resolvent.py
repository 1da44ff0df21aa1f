"""
Scalar resolvents s(t) = 1 + mu * int_0^t a(t - tau) s(tau) dtau, one per eigenmode of A.

The convolution is discretized by product integration (s piecewise linear,
kernel moments exact per cell) and solved by forward stepping; the current
node enters implicitly whenever the weight on it is nonzero.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import mpmath
import numpy as np
from scipy import integrate, special

import config
from src.errors import (
    DomainError,
    GridMismatchError,
    MittagLefflerOverflowError,
    ResolventError,
    StepFailure,
    UnsupportedError,
)
from src.fbm import TimeGrid
from src.fraccalc import SampledFunction, left_integral_weights

POWER = "power"
CONSTANT = "constant"
TABULATED = "tabulated"

# exp() overflows a double just above this
_LOG_MAX = 709.0


@dataclass(frozen=True, eq=False)
class Kernel:
    """Convolution kernel a(t): power t^(alpha-1)/Gamma(alpha), constant c, or tabulated on the grid."""

    kind: str
    alpha: float = 1.0
    c: float = 1.0
    table: Optional[SampledFunction] = None

    def __post_init__(self):
        if self.kind == POWER:
            if not (np.isfinite(self.alpha) and self.alpha > 0):
                raise DomainError(f"power kernel needs alpha > 0, got {self.alpha}")
        elif self.kind == CONSTANT:
            if not np.isfinite(self.c):
                raise DomainError(f"constant kernel value must be finite, got {self.c}")
        elif self.kind == TABULATED:
            if self.table is None or self.table.is_vector:
                raise DomainError("tabulated kernel needs scalar node values")
        else:
            raise DomainError(f"unknown kernel kind {self.kind!r}")

    @classmethod
    def power(cls, alpha: float) -> "Kernel":
        return cls(POWER, alpha=float(alpha))

    @classmethod
    def constant(cls, c: float = 1.0) -> "Kernel":
        return cls(CONSTANT, c=float(c))

    @classmethod
    def tabulated(cls, values: SampledFunction) -> "Kernel":
        return cls(TABULATED, table=values)

    @property
    def differentiable(self) -> bool:
        """Resolvent derivative identity applies (power alpha >= 1 or constant)."""
        return self.kind == CONSTANT or (self.kind == POWER and self.alpha >= 1.0)

    def describe(self) -> str:
        if self.kind == POWER:
            return f"power(alpha={self.alpha:g})"
        if self.kind == CONSTANT:
            return f"constant(c={self.c:g})"
        return f"tabulated(n={self.table.grid.n})"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == POWER:
            return t ** (self.alpha - 1.0) / math.gamma(self.alpha)
        if self.kind == CONSTANT:
            return np.full_like(t, self.c)
        return np.interp(t, self.table.grid.nodes, self.table.values)

    def convolution_weights(self, grid: TimeGrid) -> np.ndarray:
        """W with (W s)_m = int_0^{t_m} a(t_m - tau) s~(tau) dtau for piecewise-linear s~."""
        if self.kind == POWER:
            return left_integral_weights(grid, self.alpha)
        if self.kind == CONSTANT:
            return self.c * left_integral_weights(grid, 1.0)
        if not grid.matches(self.table.grid):
            raise GridMismatchError("tabulated kernel must be sampled on the simulation grid")
        return _tabulated_weights(self.table.values, grid.h)


def _tabulated_weights(a: np.ndarray, h: float) -> np.ndarray:
    """Exact integral of the product of two linear interpolants, cell by cell."""
    n = a.size - 1
    m = np.arange(n + 1)[:, None]
    k = np.arange(n + 1)[None, :]
    lag = m - k
    padded = np.concatenate([a, [0.0]])
    L = np.clip(lag, 0, n)
    own_cell = np.where(lag >= 1, padded[L] / 3.0 + padded[np.clip(L - 1, 0, n)] / 6.0, 0.0)
    prev_cell = np.where((k >= 1) & (lag >= 0), padded[np.clip(L + 1, 0, n)] / 6.0 + padded[L] / 3.0, 0.0)
    return h * (own_cell + prev_cell)


# Starting corrections for weakly singular power kernels
def correction_exponents(alpha: float, limit: float = 2.0, max_terms: int = 6) -> list:
    """Non-integer powers k*alpha < limit that a resolvent of the power kernel contains."""
    out = []
    k = 1
    while k * alpha < limit and len(out) < max_terms:
        g = k * alpha
        if abs(g - round(g)) > 1e-12:
            out.append(g)
        k += 1
    return out


def starting_exponents(alpha: float) -> list:
    """Powers the corrected rule must integrate exactly: 1 and t, plus the correction exponents."""
    corrections = correction_exponents(alpha)
    return [0.0, 1.0] + corrections if corrections else []


@lru_cache(maxsize=16)
def _starting_weights(n: int, h: float, alpha: float) -> Optional[np.ndarray]:
    """
    Extra weights on nodes t_1..t_L (columns 1..L) making the rule exact on
    t^g for every starting exponent g. None when no correction applies.
    """
    exponents = starting_exponents(alpha)
    L = len(exponents)
    if L == 0 or n < L + 1:
        return None
    grid = TimeGrid(n * h, n)
    t = grid.nodes
    W = left_integral_weights(grid, alpha)
    j = np.arange(1, L + 1, dtype=float)
    # rows scaled by h^g: sum_j omega[m, j] j^g = residual_g(t_m) / h^g
    V = np.empty((L, L))
    R = np.empty((L, n + 1))
    for r, g in enumerate(exponents):
        if g in (0.0, 1.0):
            R[r] = 0.0
        else:
            exact = math.gamma(g + 1.0) / math.gamma(g + alpha + 1.0) * t ** (g + alpha)
            R[r] = (exact - W @ t ** g) / h ** g
        V[r] = j ** g
    omega = np.zeros((n + 1, n + 1))
    omega[:, 1:L + 1] = np.linalg.solve(V, R).T
    omega[0] = 0.0
    return omega


def corrected_weights(kernel: Kernel, grid: TimeGrid):
    """Convolution weights plus the number of leading nodes solved jointly."""
    W = kernel.convolution_weights(grid)
    if kernel.kind == POWER and kernel.alpha < 1.0:
        omega = _starting_weights(grid.n, grid.h, kernel.alpha)
        if omega is not None:
            return W + omega, len(starting_exponents(kernel.alpha))
    return W, 0


def _step(W: np.ndarray, mus: np.ndarray, n: int, start: int) -> np.ndarray:
    """Forward stepping of (I - mu W) s = 1 for all modes; raises StepFailure with the column of the bad mode."""
    K = mus.size
    s = np.empty((K, n + 1))
    s[:, 0] = 1.0
    if start > 0:
        block = np.arange(start + 1)
        for i, mu in enumerate(mus):
            A = np.eye(start + 1) - mu * W[np.ix_(block, block)]
            try:
                s[i, :start + 1] = np.linalg.solve(A, np.ones(start + 1))
            except np.linalg.LinAlgError as e:
                raise ResolventError(i, StepFailure(start, f"starting block is singular ({e})"))
    for m in range(start + 1, n + 1):
        denom = 1.0 - mus * W[m, m]
        bad = np.flatnonzero(denom == 0.0)
        if bad.size:
            raise ResolventError(int(bad[0]), StepFailure(m, "implicit step equation is singular"))
        s[:, m] = (1.0 + mus * (s[:, :m] @ W[m, :m])) / denom
    return s


def solve_scalar_resolvent(kernel: Kernel, mu: float, grid: TimeGrid) -> SampledFunction:
    """s on the grid for one eigenvalue mu."""
    try:
        W, start = corrected_weights(kernel, grid)
        s = _step(W, np.array([float(mu)]), grid.n, start)
    except ResolventError as e:
        raise e.cause from None
    return SampledFunction(grid, s[0])


def discrete_residual(kernel: Kernel, mu: float, s: SampledFunction) -> float:
    """sup |s - 1 - mu W s| for the discretization the solver used."""
    W, _ = corrected_weights(kernel, s.grid)
    return float(np.max(np.abs(s.values - 1.0 - mu * (W @ s.values))))


@dataclass(frozen=True, eq=False)
class ResolventTable:
    grid: TimeGrid
    modes: np.ndarray
    kernel: Kernel
    eigenvalues: np.ndarray
    residuals: np.ndarray = field(default=None)

    @property
    def K(self) -> int:
        return self.modes.shape[0]

    @property
    def residual_bound(self) -> float:
        return float(np.max(self.residuals)) if self.residuals is not None else float("nan")

    def mode(self, k: int) -> SampledFunction:
        return SampledFunction(self.grid, self.modes[k])

    def lagged(self, t: float) -> np.ndarray:
        """s_i(t - s) at the nodes s = t_0..t_m of [0, t], shape (K, m+1)."""
        m = self.grid.node_index(t)
        lag = t - self.grid.nodes[: m + 1]
        return np.stack([np.interp(lag, self.grid.nodes, row) for row in self.modes])

    def restrict(self, m: int) -> "ResolventTable":
        return ResolventTable(self.grid.restrict(m), self.modes[:, : m + 1].copy(), self.kernel,
                              self.eigenvalues, self.residuals)


def build_resolvent_table(spectrum: Sequence[float], kernel: Kernel, grid: TimeGrid) -> ResolventTable:
    """Stack solve_scalar_resolvent over modes; errors carry the mode index."""
    mus = np.asarray(spectrum, dtype=float)
    if mus.ndim != 1 or mus.size == 0 or not np.all(np.isfinite(mus)):
        raise DomainError("spectrum must be a nonempty vector of finite eigenvalues")
    W, start = corrected_weights(kernel, grid)
    modes = _step(W, mus, grid.n, start)
    residuals = np.max(np.abs(modes - 1.0 - mus[:, None] * (modes @ W.T)), axis=1)
    return ResolventTable(grid, modes, kernel, mus, residuals)


def resolvent_derivative_residual(table: ResolventTable, mode: int) -> float:
    """
    sup over interior nodes of |s_k' - (a' * mu s_k + a(0) mu s_k)|, derivative by finite differences.

    For a power kernel of order alpha > 1, a' is the power kernel of order
    alpha - 1 and a(0) = 0; for alpha = 1 and constant kernels a' = 0.
    """
    kernel = table.kernel
    if not kernel.differentiable:
        raise DomainError(
            f"derivative identity needs a kernel of bounded variation (power alpha >= 1); got {kernel.describe()}"
        )
    mu = float(table.eigenvalues[mode])
    s = table.modes[mode]
    if mu == 0.0:
        return 0.0
    grid = table.grid
    ds = np.gradient(s, grid.h, edge_order=2)
    if kernel.kind == CONSTANT:
        rhs = kernel.c * mu * s
    elif kernel.alpha == 1.0:
        rhs = mu * s
    else:
        rhs = mu * (left_integral_weights(grid, kernel.alpha - 1.0) @ s)
    return float(np.max(np.abs(ds - rhs)[1:-1])) if grid.n > 1 else 0.0


# Mittag-Leffler function
def _ml_series(alpha: float, z: float) -> float:
    if z == 0.0:
        return 1.0
    log_abs = math.log(abs(z))
    sign = -1.0 if z < 0 else 1.0
    terms = []
    m0 = 0
    peak = -np.inf
    while True:
        m = np.arange(m0, m0 + 256, dtype=float)
        log_terms = m * log_abs - special.gammaln(alpha * m + 1.0)
        if log_terms.max() > _LOG_MAX:
            raise MittagLefflerOverflowError(f"E_{alpha}({z}) exceeds the floating point range")
        peak = max(peak, log_terms.max())
        signs = np.where(m % 2 == 1, sign, 1.0)
        terms.extend((signs * np.exp(log_terms)).tolist())
        tail = log_terms[-1]
        decreasing = log_terms[-1] < log_terms[-2]
        if decreasing and tail < peak + math.log(config.MITTAG_LEFFLER_SERIES_RTOL) - 2.0:
            break
        m0 += 256
        if m0 > 200_000:
            raise UnsupportedError(f"E_{alpha}({z}): series does not converge in reasonable time")
    return math.fsum(terms)


def _ml_spectral_integral(alpha: float, x: float) -> float:
    """
    E_alpha(-x), 0 < alpha < 1, x > 0, as a Laplace integral of a positive density.

    With t = x^(1/alpha) and r = u/t the integrand becomes
    u^(alpha-1) e^(-u) / (x pi) * sin(alpha pi) / (q^2 + 2 q cos(alpha pi) + 1), q = (u/t)^alpha,
    so the endpoint singularity at u = 0 goes into an algebraic quadrature weight.
    """
    t = x ** (1.0 / alpha)
    sin_a = math.sin(alpha * math.pi)
    cos_a = math.cos(alpha * math.pi)

    def smooth(u):
        q = (u / t) ** alpha
        return math.exp(-u) * sin_a / (math.pi * x * (q * q + 2.0 * q * cos_a + 1.0))

    head, _ = integrate.quad(smooth, 0.0, 1.0, weight="alg", wvar=(alpha - 1.0, 0.0),
                             epsabs=0.0, epsrel=config.MITTAG_LEFFLER_QUAD_RTOL, limit=200)
    tail, _ = integrate.quad(lambda u: u ** (alpha - 1.0) * smooth(u), 1.0, np.inf,
                             epsabs=0.0, epsrel=config.MITTAG_LEFFLER_QUAD_RTOL, limit=200)
    return head + tail


def _ml_series_extended(alpha: float, z: float) -> float:
    """Power series in extended precision; the working digits grow with |z|^(1/alpha) to absorb cancellation."""
    root = abs(z) ** (1.0 / alpha)
    digits = 20 + int(root / math.log(10.0))
    with mpmath.workdps(digits):
        a = mpmath.mpf(alpha)
        x = mpmath.mpf(z)
        cutoff = mpmath.mpf(10) ** (-digits)
        total = mpmath.mpf(0)
        power = mpmath.mpf(1)
        m = 0
        while True:
            term = power * mpmath.rgamma(a * m + 1)
            total += term
            if alpha * m > root + 1.0 and abs(term) < cutoff:
                break
            m += 1
            power *= x
        return float(total)


def _ml_asymptotic(alpha: float, z: float) -> float:
    """Exponential terms for the admissible branches of z^(1/alpha) plus the algebraic tail."""
    arg = math.pi if z < 0 else 0.0
    radius = abs(z) ** (1.0 / alpha)
    total = 0.0 + 0.0j
    m_max = int(math.ceil(alpha)) + 1
    for m in range(-m_max, m_max + 1):
        phase = arg + 2.0 * math.pi * m
        if abs(phase) <= alpha * math.pi:
            root = radius * complex(math.cos(phase / alpha), math.sin(phase / alpha))
            if root.real > _LOG_MAX:
                raise MittagLefflerOverflowError(f"E_{alpha}({z}) exceeds the floating point range")
            total += np.exp(root) / alpha
    algebraic = []
    prev = np.inf
    for k in range(1, 60):
        term = z ** (-k) * special.rgamma(1.0 - alpha * k)
        if term != 0.0 and abs(term) > prev:
            break
        algebraic.append(term)
        if term != 0.0:
            prev = abs(term)
    return float(total.real) - math.fsum(algebraic)


def mittag_leffler(alpha: float, z: float) -> float:
    """
    E_alpha(z) = sum_m z^m / Gamma(alpha m + 1).

    Closed forms for alpha in {1/2, 1, 2}. Otherwise the power series for
    z >= 0 and for |z| <= MITTAG_LEFFLER_SERIES_RADIUS. Further out on the
    negative axis: a Laplace integral when alpha < 1; for alpha > 1 the series
    in extended precision while |z|^(1/alpha) <= MITTAG_LEFFLER_ASYMPTOTIC_ROOT,
    the asymptotic expansion beyond.
    """
    alpha = float(alpha)
    z = float(z)
    if not (np.isfinite(alpha) and alpha > 0):
        raise DomainError(f"Mittag-Leffler order must be positive, got {alpha}")
    if not np.isfinite(z):
        raise DomainError(f"Mittag-Leffler argument must be finite, got {z}")

    if alpha == 1.0:
        if z > _LOG_MAX:
            raise MittagLefflerOverflowError(f"E_1({z}) exceeds the floating point range")
        return math.exp(z)
    if alpha == 2.0:
        if z < 0:
            return math.cos(math.sqrt(-z))
        if math.sqrt(z) > _LOG_MAX:
            raise MittagLefflerOverflowError(f"E_2({z}) exceeds the floating point range")
        return math.cosh(math.sqrt(z))
    if alpha == 0.5:
        value = float(special.erfcx(-z))
        if not np.isfinite(value):
            raise MittagLefflerOverflowError(f"E_0.5({z}) exceeds the floating point range")
        return value

    if z >= 0 or abs(z) <= config.MITTAG_LEFFLER_SERIES_RADIUS:
        return _ml_series(alpha, z)
    if alpha < 1.0:
        return _ml_spectral_integral(alpha, -z)
    if abs(z) ** (1.0 / alpha) <= config.MITTAG_LEFFLER_ASYMPTOTIC_ROOT:
        return _ml_series_extended(alpha, z)
    return _ml_asymptotic(alpha, z)
