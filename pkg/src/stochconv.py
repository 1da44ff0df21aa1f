"""
Stochastic integral, stochastic convolution and weak solution in the truncated spectral model.

Two sampling routes:
  riemann         left-point Riemann-Stieltjes sums over the fBm increments (pathwise)
  exact_gaussian  marginal draws from the analytic covariance at chosen nodes
"""

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

import config
from src.errors import DomainError, FractionalAccuracyWarning, GridMismatchError, PSDRepairError
from src.fbm import HurstParameter, TimeGrid, fgn_covariance_matrix, hurst_value, make_rng
from src.resolvent import ResolventTable
from src.spectral import HilbertPath, OperatorField

RIEMANN = "riemann"
EXACT_GAUSSIAN = "exact_gaussian"

# spawn-key prefix keeping exact-route draws apart from the (replica, mode) fBm streams
_EXACT_STREAM_TAG = 7


@dataclass(frozen=True, eq=False)
class ConvolutionSample:
    """Coordinates of X_S^F at `times`: shape (K, len(times)), or (R, K, len(times)) for a batch."""

    times: np.ndarray
    coords: np.ndarray
    method: str
    hurst: HurstParameter
    seed: int = 0
    grid: Optional[TimeGrid] = None

    def as_path(self) -> HilbertPath:
        if self.method != RIEMANN or self.coords.ndim != 2:
            raise DomainError("only a single riemann sample is a path on the grid")
        return HilbertPath(self.grid, self.coords, self.hurst, self.seed, self.method)


def _check_grids(*grids: TimeGrid) -> TimeGrid:
    for g in grids[1:]:
        if not grids[0].matches(g):
            raise GridMismatchError(
                f"grids differ: (T={grids[0].T}, n={grids[0].n}) vs (T={g.T}, n={g.n})"
            )
    return grids[0]


def _weighted_increments(F: OperatorField, coords: np.ndarray) -> np.ndarray:
    """sum_k F_ik(t_j) dB_k(t_j) for j = 0..n-1; coords (..., K, n+1) -> (..., K, n)."""
    dB = np.diff(coords, axis=-1)
    flat = dB.reshape(-1, dB.shape[-2], dB.shape[-1])
    out = np.empty((flat.shape[0], F.K, flat.shape[-1]))
    for b in range(flat.shape[0]):
        out[b] = np.einsum("jik,kj->ij", F.matrices[:-1], flat[b])
    return out.reshape(dB.shape[:-2] + out.shape[1:])


def integral_coords(F: OperatorField, coords: np.ndarray) -> np.ndarray:
    """Cumulative left-point sums, zero at t_0; works on single paths and batches."""
    G = _weighted_increments(F, coords)
    out = np.zeros(G.shape[:-1] + (G.shape[-1] + 1,))
    np.cumsum(G, axis=-1, out=out[..., 1:])
    return out


def convolution_coords(modes: np.ndarray, F: OperatorField, coords: np.ndarray) -> np.ndarray:
    """
    X_i(t_m) = sum_{j<m} s_i(t_m - t_j) [F(t_j) dB_j]_i as a causal Toeplitz product per mode.

    One matrix-vector product per path, so a path's coordinates do not depend
    on how many paths share the batch.
    """
    G = _weighted_increments(F, coords)
    n = G.shape[-1]
    m = np.arange(n + 1)[:, None]
    j = np.arange(n)[None, :]
    lag = m - j
    flat = G.reshape(-1, G.shape[-2], n)
    out = np.empty(flat.shape[:-1] + (n + 1,))
    for i in range(modes.shape[0]):
        toeplitz = np.where(lag >= 1, modes[i][np.clip(lag, 0, n)], 0.0)
        for b in range(flat.shape[0]):
            out[b, i] = toeplitz @ flat[b, i]
    return out.reshape(G.shape[:-1] + (n + 1,))


def stochastic_integral(F: OperatorField, noise: HilbertPath) -> HilbertPath:
    """int_0^t F dB^H by left-point sums sum_j F(t_j) (B(t_{j+1}) - B(t_j))."""
    _check_grids(F.grid, noise.grid)
    if F.K != noise.K:
        raise DomainError(f"operator field has K={F.K}, noise has K={noise.K}")
    return HilbertPath(noise.grid, integral_coords(F, noise.coords), noise.hurst, noise.seed,
                       noise.method, noise.stream)


def warn_if_slow_riemann(H: float) -> None:
    if H < config.RIEMANN_MIN_HURST:
        warnings.warn(
            f"riemann route converges slowly for H={H:g} < {config.RIEMANN_MIN_HURST}; prefer exact_gaussian",
            FractionalAccuracyWarning,
            stacklevel=3,
        )


def simulate_convolution(table: ResolventTable, F: OperatorField, noise: HilbertPath) -> ConvolutionSample:
    """int_0^t S(t-s) F(s) dB^H(s) on every node by left-point sums."""
    grid = _check_grids(table.grid, F.grid, noise.grid)
    if not (table.K == F.K == noise.K):
        raise DomainError(f"mode counts differ: table {table.K}, field {F.K}, noise {noise.K}")
    warn_if_slow_riemann(noise.hurst.H)
    coords = convolution_coords(table.modes, F, noise.coords)
    return ConvolutionSample(grid.nodes, coords, RIEMANN, noise.hurst, noise.seed, grid)


def simulate_weak_solution(X0: Sequence[float], table: ResolventTable, F: OperatorField,
                           noise: HilbertPath) -> HilbertPath:
    """X(t) = S(t) X0 + X_S^F(t), coordinatewise."""
    x0 = np.asarray(X0, dtype=float)
    if x0.shape != (table.K,):
        raise DomainError(f"initial value must have {table.K} coordinates, got shape {x0.shape}")
    conv = simulate_convolution(table, F, noise)
    coords = table.modes * x0[:, None] + conv.coords
    return HilbertPath(noise.grid, coords, noise.hurst, noise.seed, RIEMANN, noise.stream)


def covariance_sqrt(matrix: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix; small negative eigenvalues are clipped."""
    sym = 0.5 * (matrix + matrix.T)
    w, v = linalg.eigh(sym)
    radius = max(np.abs(w).max(), 0.0)
    if radius > 0 and w.min() < -config.COVARIANCE_PSD_TOL * radius:
        raise PSDRepairError(
            f"covariance has eigenvalue {w.min():.3e} below -{config.COVARIANCE_PSD_TOL:g} x spectral radius {radius:.3e}"
        )
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def exact_gaussian_batch(matrix: np.ndarray, seed: int, replicas: Sequence[int], node: int = 0) -> np.ndarray:
    """Draws N(0, matrix), one per replica stream; shape (len(replicas), K)."""
    root = covariance_sqrt(np.asarray(matrix, dtype=float))
    K = root.shape[0]
    draws = np.empty((len(replicas), K))
    for r, replica in enumerate(replicas):
        draws[r] = root @ make_rng(seed, (_EXACT_STREAM_TAG, int(node), int(replica))).standard_normal(K)
    return draws


def exact_gaussian_convolution(covariances: Sequence, seed: int, replica: int = 0) -> ConvolutionSample:
    """
    One marginal draw per covariance (each a CovarianceMatrix at its own time).

    Marginals are exact; the joint law across times is not the law of the
    convolution, since every node uses independent normals.
    """
    if not covariances:
        raise DomainError("need at least one covariance matrix")
    times = np.array([c.t for c in covariances], dtype=float)
    coords = np.stack(
        [exact_gaussian_batch(c.entries, seed, [replica], node=j)[0] for j, c in enumerate(covariances)],
        axis=-1,
    )
    H = HurstParameter(hurst_value(covariances[0].H))
    return ConvolutionSample(times, coords, EXACT_GAUSSIAN, H, int(seed))


def riemann_scheme_covariance(table: ResolventTable, F: OperatorField, lam: np.ndarray, H, t: float) -> np.ndarray:
    """
    Exact covariance of the left-point scheme at node t: the sums are linear
    in Gaussian fGn increments, so their covariance is c_ik^T Gamma c_i'k
    summed over noise modes with weights lambda_k.
    """
    grid = _check_grids(table.grid, F.grid)
    m = grid.node_index(t)
    K = table.K
    if m == 0:
        return np.zeros((K, K))
    gamma = fgn_covariance_matrix(m, grid.h, H)
    j = np.arange(m)
    # c[i, k, j] = s_i(t_m - t_j) F_ik(t_j)
    c = table.modes[:, m - j][:, None, :] * F.coefficients()[:, :, :m]
    out = np.einsum("ikj,jl,pkl,k->ip", c, gamma, c, np.asarray(lam, dtype=float), optimize=True)
    return 0.5 * (out + out.T)
