"""Truncated eigen-representation: noise weights lambda_k, spectrum mu_k of A, coefficient field F(t), Hilbert-valued fBm."""

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.errors import DomainError, GridMismatchError, UnsupportedError
from src.fbm import CIRCULANT, HurstParameter, TimeGrid, hurst_value, sample_fbm_batch

DIAGONAL = "diagonal"
DENSE = "dense"


@dataclass(frozen=True)
class LambdaFamily:
    """lambda_k = scale * k^(-p) ("power") or an explicit list."""

    kind: str = "power"
    p: float = 2.0
    scale: float = 1.0
    values: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind == "power":
            if not self.p > 1.0:
                raise DomainError(f"power family needs p > 1 for a finite trace, got p={self.p}")
            if not self.scale >= 0.0:
                raise DomainError(f"power family scale must be nonnegative, got {self.scale}")
        elif self.kind == "explicit":
            if any(v < 0 or not np.isfinite(v) for v in self.values):
                raise DomainError("noise weights must be finite and nonnegative")
        else:
            raise DomainError(f"unknown noise family {self.kind!r}")

    def weights(self, K: int) -> np.ndarray:
        if self.kind == "power":
            return self.scale * np.arange(1, K + 1, dtype=float) ** (-self.p)
        if len(self.values) < K:
            raise DomainError(f"explicit noise family lists {len(self.values)} weights, need {K}")
        return np.asarray(self.values[:K], dtype=float)


@dataclass(frozen=True)
class MuFamily:
    """mu_k = -coefficient * k^2 ("dirichlet"), all zero, or an explicit list."""

    kind: str = "dirichlet"
    coefficient: float = 1.0
    values: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("dirichlet", "zero", "explicit"):
            raise DomainError(f"unknown spectrum family {self.kind!r}")

    def eigenvalues(self, K: int) -> np.ndarray:
        if self.kind == "dirichlet":
            return -self.coefficient * np.arange(1, K + 1, dtype=float) ** 2
        if self.kind == "zero":
            return np.zeros(K)
        if len(self.values) < K:
            raise DomainError(f"explicit spectrum lists {len(self.values)} eigenvalues, need {K}")
        return np.asarray(self.values[:K], dtype=float)


def tail_mass_report(family: LambdaFamily, K: int) -> float:
    """Integral-test bound on sum_{k>K} lambda_k."""
    if family.kind != "power":
        raise UnsupportedError(f"no closed-form tail bound for the {family.kind!r} family")
    if K < 1:
        raise DomainError(f"truncation level must be positive, got {K}")
    return family.scale * K ** (1.0 - family.p) / (family.p - 1.0)


@dataclass(frozen=True, eq=False)
class SpectralModel:
    K: int
    lam: np.ndarray
    mu: np.ndarray
    tail_mass: Optional[float] = None

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        mu = np.asarray(self.mu, dtype=float)
        if self.K < 1 or lam.shape != (self.K,) or mu.shape != (self.K,):
            raise DomainError(f"model needs K >= 1 weights and eigenvalues, got {lam.shape} and {mu.shape}")
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise DomainError("noise weights must be finite and nonnegative")
        if not np.all(np.isfinite(mu)):
            raise DomainError("eigenvalues of A must be finite")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", mu)

    @classmethod
    def from_families(cls, K: int, lam: LambdaFamily, mu: MuFamily) -> "SpectralModel":
        tail = tail_mass_report(lam, K) if lam.kind == "power" else None
        return cls(K, lam.weights(K), mu.eigenvalues(K), tail)

    @property
    def trace(self) -> float:
        return float(self.lam.sum())


@dataclass(frozen=True, eq=False)
class OperatorField:
    """Samples F(t_j) in the eigenbasis, shape (n+1, K, K)."""

    grid: TimeGrid
    matrices: np.ndarray
    structure: str = DENSE

    def __post_init__(self):
        m = np.asarray(self.matrices, dtype=float)
        if m.ndim != 3 or m.shape[0] != self.grid.size or m.shape[1] != m.shape[2]:
            raise GridMismatchError(f"operator field must have shape (n+1, K, K), got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise DomainError("operator field entries must be finite")
        if self.structure not in (DIAGONAL, DENSE):
            raise DomainError(f"unknown operator structure {self.structure!r}")
        if self.structure == DIAGONAL:
            off = m * (1.0 - np.eye(m.shape[1]))
            if np.any(off != 0.0):
                raise DomainError("diagonal operator field has nonzero off-diagonal entries")
        object.__setattr__(self, "matrices", m)

    @property
    def K(self) -> int:
        return self.matrices.shape[1]

    @classmethod
    def identity(cls, grid: TimeGrid, K: int) -> "OperatorField":
        return cls(grid, np.broadcast_to(np.eye(K), (grid.size, K, K)).copy(), DIAGONAL)

    @classmethod
    def zeros(cls, grid: TimeGrid, K: int) -> "OperatorField":
        return cls(grid, np.zeros((grid.size, K, K)), DIAGONAL)

    @classmethod
    def diagonal_constant(cls, grid: TimeGrid, c: Sequence[float]) -> "OperatorField":
        diag = np.diag(np.asarray(c, dtype=float))
        return cls(grid, np.broadcast_to(diag, (grid.size,) + diag.shape).copy(), DIAGONAL)

    @classmethod
    def constant(cls, grid: TimeGrid, matrix) -> "OperatorField":
        M = np.atleast_2d(np.asarray(matrix, dtype=float))
        return cls(grid, np.broadcast_to(M, (grid.size,) + M.shape).copy(), DENSE)

    @classmethod
    def from_csv(cls, path, grid: TimeGrid, K: int) -> "OperatorField":
        """Long-format CSV with columns node, i, j, value; missing entries are zero."""
        df = pd.read_csv(path, float_precision="round_trip")
        missing = {"node", "i", "j", "value"} - set(df.columns)
        if missing:
            raise DomainError(f"{path}: missing columns {sorted(missing)}")
        node = df["node"].to_numpy(dtype=int)
        i = df["i"].to_numpy(dtype=int)
        j = df["j"].to_numpy(dtype=int)
        if node.min() < 0 or node.max() > grid.n or min(i.min(), j.min()) < 0 or max(i.max(), j.max()) >= K:
            raise DomainError(f"{path}: indices outside the grid or the truncation level")
        m = np.zeros((grid.size, K, K))
        m[node, i, j] = df["value"].to_numpy(dtype=float)
        structure = DIAGONAL if np.all(i == j) else DENSE
        return cls(grid, m, structure)

    def coefficients(self) -> np.ndarray:
        """f_{ij}(t_m) as an array (K, K, n+1)."""
        return np.moveaxis(self.matrices, 0, -1)

    def restrict(self, m: int) -> "OperatorField":
        return OperatorField(self.grid.restrict(m), self.matrices[: m + 1].copy(), self.structure)

    def scaled(self, c: float) -> "OperatorField":
        return OperatorField(self.grid, c * self.matrices, self.structure)

    def plus(self, other: "OperatorField") -> "OperatorField":
        if not self.grid.matches(other.grid) or self.K != other.K:
            raise GridMismatchError("operator fields must share grid and truncation level")
        structure = DIAGONAL if self.structure == other.structure == DIAGONAL else DENSE
        return OperatorField(self.grid, self.matrices + other.matrices, structure)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.matrices)


@dataclass(frozen=True, eq=False)
class HilbertPath:
    grid: TimeGrid
    coords: np.ndarray
    hurst: HurstParameter
    seed: int = 0
    method: str = CIRCULANT
    stream: tuple = field(default_factory=tuple)

    @property
    def K(self) -> int:
        return self.coords.shape[0]

    def scaled(self, c: float) -> "HilbertPath":
        return HilbertPath(self.grid, c * self.coords, self.hurst, self.seed, self.method, self.stream)

    @classmethod
    def zeros(cls, grid: TimeGrid, K: int, H) -> "HilbertPath":
        return cls(grid, np.zeros((K, grid.size)), HurstParameter(hurst_value(H)))


def _mode_streams(replicas: Sequence[int], K: int):
    return [(int(r), k) for r in replicas for k in range(K)]


def sample_hilbert_fbm_batch(model: SpectralModel, grid: TimeGrid, H, seed: int,
                             replicas: Sequence[int], method: str = CIRCULANT):
    """Coordinates of B^H for many replicas, shape (len(replicas), K, n+1); stream (replica, mode)."""
    paths, used = sample_fbm_batch(grid, H, seed, _mode_streams(replicas, model.K), method)
    coords = paths.reshape(len(replicas), model.K, grid.size)
    return np.sqrt(model.lam)[None, :, None] * coords, used


def sample_hilbert_fbm(model: SpectralModel, grid: TimeGrid, H, seed: int,
                       replica: int = 0, method: str = CIRCULANT) -> HilbertPath:
    """Row k is sqrt(lambda_k) times an independent scalar fBm on stream (replica, k)."""
    coords, used = sample_hilbert_fbm_batch(model, grid, H, seed, [replica], method)
    return HilbertPath(grid, coords[0], HurstParameter(hurst_value(H)), int(seed), used, (int(replica),))
