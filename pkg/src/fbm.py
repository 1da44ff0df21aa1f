"""Real-valued fractional Brownian motion: covariance, θ_H, exact sampling on uniform grids."""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence, Union

import numpy as np
from scipy import linalg

import config
from src.errors import DomainError, SamplerError, SingularityError

CIRCULANT = "circulant"
CHOLESKY = "cholesky"


@dataclass(frozen=True)
class HurstParameter:
    H: float

    def __post_init__(self):
        if not (0.0 < float(self.H) < 1.0):
            raise DomainError(f"Hurst parameter must lie in (0, 1), got {self.H}")
        object.__setattr__(self, "H", float(self.H))

    def __float__(self) -> float:
        return self.H


HurstLike = Union[float, HurstParameter]


def hurst_value(H: HurstLike) -> float:
    """Validate and unwrap a Hurst parameter."""
    return HurstParameter(float(H)).H


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_j = jT/n, j = 0..n."""

    T: float
    n: int

    def __post_init__(self):
        if not np.isfinite(self.T) or self.T <= 0:
            raise DomainError(f"grid horizon must be positive, got {self.T}")
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"grid steps must be a positive integer, got {self.n}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return self.T / self.n

    @property
    def size(self) -> int:
        return self.n + 1

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n + 1)

    @classmethod
    def from_nodes(cls, nodes: Sequence[float]) -> "TimeGrid":
        t = np.asarray(nodes, dtype=float)
        if t.ndim != 1 or t.size < 2 or t[0] != 0.0:
            raise DomainError("grid nodes must be a 1-D sequence starting at 0")
        steps = np.diff(t)
        if np.any(steps <= 0):
            raise DomainError("grid nodes must be strictly increasing")
        if np.max(np.abs(steps - steps.mean())) > 1e-9 * steps.mean():
            raise DomainError("nonuniform grids are not supported")
        return cls(float(t[-1]), t.size - 1)

    def node_index(self, t: float) -> int:
        """Index j with t_j == t; off-grid times are rejected."""
        x = float(t) / self.h
        j = int(round(x))
        if abs(x - j) > 1e-8 * max(1.0, abs(x)) or not (0 <= j <= self.n):
            raise DomainError(f"time {t} is not a node of grid (T={self.T}, n={self.n})")
        return j

    def restrict(self, m: int) -> "TimeGrid":
        """Sub-grid of the first m steps, same spacing."""
        if not (1 <= m <= self.n):
            raise DomainError(f"cannot restrict grid of {self.n} steps to {m}")
        return TimeGrid(m * self.h, m)

    def matches(self, other: "TimeGrid") -> bool:
        return self.n == other.n and abs(self.T - other.T) <= 1e-12 * max(self.T, other.T)


@dataclass(frozen=True)
class FbmPath:
    grid: TimeGrid
    values: np.ndarray
    hurst: HurstParameter
    seed: int
    method: str = CIRCULANT
    stream: tuple = field(default_factory=tuple)


def make_rng(seed: int, stream: Iterable[int] = ()) -> np.random.Generator:
    """Counter-based generator for the (seed, *stream) key."""
    if int(seed) < 0:
        raise DomainError(f"seed must be unsigned, got {seed}")
    key = tuple(int(s) for s in stream)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=key)))


def fbm_covariance(s, t, H: HurstLike):
    """r(s,t) = ½(s^{2H} + t^{2H} − |s−t|^{2H}); broadcasts over arrays."""
    h2 = 2.0 * hurst_value(H)
    s_arr = np.asarray(s, dtype=float)
    t_arr = np.asarray(t, dtype=float)
    if np.any(s_arr < 0) or np.any(t_arr < 0):
        raise DomainError("fBm covariance is defined for nonnegative times only")
    r = 0.5 * (s_arr ** h2 + t_arr ** h2 - np.abs(s_arr - t_arr) ** h2)
    return float(r) if r.ndim == 0 else r


def theta_H(s, t, H: HurstLike):
    """H(2H−1)|s−t|^{2H−2}, the mixed second derivative of the covariance (H > 1/2)."""
    Hv = hurst_value(H)
    if Hv <= 0.5:
        raise DomainError(f"θ_H requires H > 1/2, got {Hv}")
    d = np.abs(np.asarray(s, dtype=float) - np.asarray(t, dtype=float))
    if np.any(d == 0):
        raise SingularityError("θ_H is singular on the diagonal s = t")
    out = Hv * (2.0 * Hv - 1.0) * d ** (2.0 * Hv - 2.0)
    return float(out) if out.ndim == 0 else out


def fgn_autocovariance(n: int, h: float, H: HurstLike) -> np.ndarray:
    """Autocovariance of fBm increments over steps of length h at lags 0..n."""
    h2 = 2.0 * hurst_value(H)
    j = np.arange(n + 1, dtype=float)
    return 0.5 * h ** h2 * (np.abs(j + 1) ** h2 - 2.0 * j ** h2 + np.abs(j - 1) ** h2)


def fgn_covariance_matrix(n: int, h: float, H: HurstLike) -> np.ndarray:
    return linalg.toeplitz(fgn_autocovariance(n - 1, h, H))


@lru_cache(maxsize=64)
def _circulant_sqrt_eigenvalues(n: int, h: float, H: float):
    """sqrt(λ/2n) of the 2n circulant embedding, or None when the embedding is not PSD."""
    gamma = fgn_autocovariance(n, h, H)
    row = np.concatenate([gamma, gamma[1:n][::-1]])
    eig = np.fft.fft(row).real
    if eig.min() < -config.CIRCULANT_NEGATIVE_TOL * eig.max():
        return None
    return np.sqrt(np.maximum(eig, 0.0) / (2 * n))


@lru_cache(maxsize=16)
def _cholesky_factor(n: int, h: float, H: float) -> np.ndarray:
    cov = fgn_covariance_matrix(n, h, H)
    try:
        return linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        w, v = linalg.eigh(cov)
        if w.min() < -config.CHOLESKY_PSD_TOL * w.max():
            raise SamplerError(
                f"increment covariance is not PSD (min eigenvalue {w.min():.3e}) for H={H}, n={n}"
            )
        return v * np.sqrt(np.maximum(w, 0.0))


def _increments(grid: TimeGrid, H: float, seed: int, streams: Sequence[tuple], method: str):
    """Exact fGn increments, one row per stream. Returns (increments, method used)."""
    if method not in (CIRCULANT, CHOLESKY):
        raise DomainError(f"unknown sampling method {method!r}")
    n = grid.n
    sqrt_eig = None if method == CHOLESKY else _circulant_sqrt_eigenvalues(n, grid.h, H)
    if sqrt_eig is not None:
        out = np.empty((len(streams), n))
        for r, stream in enumerate(streams):
            rng = make_rng(seed, stream)
            z = rng.standard_normal(2 * n) + 1j * rng.standard_normal(2 * n)
            out[r] = np.fft.fft(z * sqrt_eig).real[:n]
        return out, CIRCULANT
    factor = _cholesky_factor(n, grid.h, H)
    out = np.empty((len(streams), n))
    for r, stream in enumerate(streams):
        out[r] = factor @ make_rng(seed, stream).standard_normal(n)
    return out, CHOLESKY


def sample_fbm_batch(grid: TimeGrid, H: HurstLike, seed: int, streams: Sequence[tuple],
                     method: str = CIRCULANT):
    """Paths for many streams at once: array (len(streams), n+1) and the method used."""
    Hv = hurst_value(H)
    inc, used = _increments(grid, Hv, seed, [tuple(s) for s in streams], method)
    paths = np.zeros((inc.shape[0], grid.n + 1))
    np.cumsum(inc, axis=1, out=paths[:, 1:])
    return paths, used


def sample_fbm(grid: TimeGrid, H: HurstLike, seed: int, stream: tuple = (),
               method: str = CIRCULANT) -> FbmPath:
    """One exact fBm path; circulant embedding with dense Cholesky as fallback."""
    paths, used = sample_fbm_batch(grid, H, seed, [tuple(stream)], method)
    return FbmPath(grid, paths[0], HurstParameter(hurst_value(H)), int(seed), used, tuple(stream))
