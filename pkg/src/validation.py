"""Monte Carlo harness, statistical comparison against analytic covariances, weak-solution residuals."""

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

import config
from src import covariance, experiment, stochconv
from src.errors import DomainError, GridMismatchError, SamplerError
from src.fbm import HurstParameter, TimeGrid
from src.resolvent import Kernel, corrected_weights
from src.spectral import HilbertPath, OperatorField, SpectralModel, sample_hilbert_fbm_batch


class MomentAccumulator:
    """Streaming count, mean and centered cross-moment matrix of K-vectors (Chan et al. merge)."""

    def __init__(self, K: int):
        self.K = K
        self.count = 0
        self.mean = np.zeros(K)
        self.m2 = np.zeros((K, K))

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "MomentAccumulator":
        acc = cls(np.atleast_2d(samples).shape[1])
        acc.update(samples)
        return acc

    def update(self, samples: np.ndarray) -> "MomentAccumulator":
        """Add a batch of shape (N, K)."""
        x = np.atleast_2d(np.asarray(samples, dtype=float))
        if x.shape[1] != self.K:
            raise DomainError(f"expected {self.K} coordinates per sample, got {x.shape[1]}")
        if x.shape[0] == 0:
            return self
        batch = MomentAccumulator(self.K)
        batch.count = x.shape[0]
        batch.mean = x.mean(axis=0)
        centered = x - batch.mean
        batch.m2 = centered.T @ centered
        return self.merge(batch)

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        """In-place merge; returns self."""
        if other.K != self.K:
            raise DomainError(f"cannot merge accumulators of size {self.K} and {other.K}")
        if other.count == 0:
            return self
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean.copy(), other.m2.copy()
            return self
        n = self.count + other.count
        delta = other.mean - self.mean
        self.m2 = self.m2 + other.m2 + np.outer(delta, delta) * (self.count * other.count / n)
        self.mean = self.mean + delta * (other.count / n)
        self.count = n
        return self

    def covariance(self) -> np.ndarray:
        if self.count < 2:
            raise DomainError("covariance needs at least two samples")
        return self.m2 / (self.count - 1)

    def second_moment(self) -> np.ndarray:
        """Raw E[x x^T], the estimator for a mean-zero law."""
        if self.count < 1:
            raise DomainError("empty accumulator")
        return self.m2 / self.count + np.outer(self.mean, self.mean)


@dataclass
class ValidationReport:
    table: pd.DataFrame
    config_echo: dict = field(default_factory=dict)
    methods: List[str] = field(default_factory=list)
    gate: float = config.GATE_Z
    allowance: float = config.CALIBRATION_ALLOWANCE

    @property
    def entries(self) -> int:
        return len(self.table)

    @property
    def failures(self) -> int:
        return int((~self.table["passed"]).sum())

    @property
    def allowed_failures(self) -> int:
        return math.floor(self.allowance * self.entries)

    @property
    def passed(self) -> bool:
        return self.failures <= self.allowed_failures

    @property
    def pass_fraction(self) -> float:
        return 1.0 - self.failures / self.entries if self.entries else 1.0

    def summary(self) -> str:
        lines = [
            f"entries: {self.entries}",
            f"failures (|z| > {self.gate:g}): {self.failures} (allowed {self.allowed_failures})",
            f"pass fraction: {self.pass_fraction:.4f}",
            f"max |z|: {self.table['z'].abs().max():.3f}" if self.entries else "max |z|: n/a",
            f"sampler: {', '.join(sorted(set(self.methods))) or 'n/a'}",
            f"result: {'PASS' if self.passed else 'FAIL'}",
        ]
        return "\n".join(lines)

    @classmethod
    def combine(cls, reports: Sequence["ValidationReport"]) -> "ValidationReport":
        table = pd.concat([r.table for r in reports], ignore_index=True)
        methods = [m for r in reports for m in r.methods]
        echo = reports[0].config_echo if reports else {}
        return cls(table, echo, methods)


def compare(empirical: MomentAccumulator, analytic: covariance.CovarianceMatrix, node: int = 0,
            method: str = "", config_echo: Optional[dict] = None) -> ValidationReport:
    """z-scores of every covariance entry; SE from the Gaussian covariance-estimator variance."""
    A = analytic.entries
    if A.shape != (empirical.K, empirical.K):
        raise DomainError(f"dimension mismatch: empirical K={empirical.K}, analytic {A.shape}")
    N = empirical.count
    Q = empirical.covariance()
    diag = np.diag(Q)
    se = np.sqrt((np.outer(diag, diag) + Q ** 2) / N)
    diff = Q - A
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(diff == 0.0, 0.0, np.where(se > 0, diff / se, np.inf * np.sign(diff)))
    i, j = np.indices(A.shape)
    table = pd.DataFrame({
        "node": node,
        "t": analytic.t,
        "i": i.ravel(),
        "j": j.ravel(),
        "empirical": Q.ravel(),
        "analytic": A.ravel(),
        "se": se.ravel(),
        "z": z.ravel(),
    })
    table["passed"] = table["z"].abs() <= config.GATE_Z
    return ValidationReport(table, config_echo or {}, [method] if method else [])


def _node_indices(setup: experiment.Setup, times: Optional[Sequence[float]]) -> List[int]:
    times = setup.config.check_times if times is None else times
    return [setup.grid.node_index(t) for t in times]


def run_monte_carlo(setup: experiment.Setup, N: int, times: Optional[Sequence[float]] = None,
                    route: Optional[str] = None, replica_ids: Optional[Sequence[int]] = None,
                    analytic: Optional[Dict[int, covariance.CovarianceMatrix]] = None) -> Dict[int, MomentAccumulator]:
    """
    N independent convolution samples per requested node, accumulated in
    chunks of config.get_chunk_size() replicas. replica_ids overrides the
    stream indices (repeating an id repeats the sample).
    """
    if N < 2:
        raise DomainError(f"Monte Carlo needs at least 2 replicas, got {N}")
    cfg = setup.config
    route = route or cfg.monte_carlo.route
    seed = cfg.monte_carlo.seed
    nodes = _node_indices(setup, times)
    ids = list(range(N)) if replica_ids is None else [int(r) for r in replica_ids]
    if len(ids) != N:
        raise DomainError(f"replica_ids has {len(ids)} entries, expected {N}")
    acc = {m: MomentAccumulator(setup.model.K) for m in nodes}
    chunk = config.get_chunk_size()

    if route == stochconv.EXACT_GAUSSIAN:
        analytic = analytic or analytic_covariances(setup, [setup.grid.nodes[m] for m in nodes])
        for m in nodes:
            for start in range(0, N, chunk):
                draws = stochconv.exact_gaussian_batch(analytic[m].entries, seed, ids[start:start + chunk], node=m)
                acc[m].update(draws)
        return acc

    if route != stochconv.RIEMANN:
        raise DomainError(f"unknown sampling route {route!r}")
    stochconv.warn_if_slow_riemann(setup.H)
    for start in range(0, N, chunk):
        batch_ids = ids[start:start + chunk]
        try:
            noise, _ = sample_hilbert_fbm_batch(setup.model, setup.grid, setup.H, seed, batch_ids)
        except SamplerError as e:
            raise SamplerError(f"replica {batch_ids[0]}: {e}") from e
        coords = stochconv.convolution_coords(setup.table.modes, setup.F, noise)
        for m in nodes:
            acc[m].update(coords[:, :, m])
    return acc


def analytic_covariances(setup: experiment.Setup, times: Sequence[float]) -> Dict[int, covariance.CovarianceMatrix]:
    out = {}
    for t in times:
        m = setup.grid.node_index(t)
        out[m] = covariance.convolution_covariance(setup.table, setup.F, setup.model, setup.H, setup.grid.nodes[m])
    return out


def validate_experiment(setup: experiment.Setup, N: Optional[int] = None, inject_fault: bool = False,
                        route: Optional[str] = None) -> ValidationReport:
    """Monte Carlo against the analytic covariance at every check time."""
    cfg = setup.config
    N = N or cfg.monte_carlo.replicas
    route = route or cfg.monte_carlo.route
    analytic = analytic_covariances(setup, cfg.check_times)
    empirical = run_monte_carlo(setup, N, route=route, analytic=analytic)
    echo = experiment.to_dict(cfg)
    reports = []
    for m, acc in empirical.items():
        target = analytic[m].scaled(config.FAULT_SCALE) if inject_fault else analytic[m]
        reports.append(compare(acc, target, node=m, method=route, config_echo=echo))
    return ValidationReport.combine(reports)


def weak_residual(path: HilbertPath, noise: HilbertPath, model: SpectralModel, kernel: Kernel,
                  k: int, t: float, F: Optional[OperatorField] = None) -> float:
    """
    |x_k(t) - x_k(0) - mu_k (a * x_k)(t) - (int_0^t F dB^H)_k| for the eigenvector test function h_k,
    with the same product-integration weights as the resolvent solver and the same left-point sums
    as the simulator.
    """
    grid: TimeGrid = path.grid
    if not grid.matches(noise.grid):
        raise GridMismatchError("path and noise must share a grid")
    if path.K != model.K or noise.K != model.K:
        raise DomainError(f"path, noise and model must have K={model.K} modes")
    m = grid.node_index(t)
    F = OperatorField.identity(grid, model.K) if F is None else F
    W, _ = corrected_weights(kernel, grid)
    x = path.coords[k]
    memory = float(W[m] @ x)
    stochastic = stochconv.integral_coords(F, noise.coords)[k, m]
    return abs(x[m] - x[0] - model.mu[k] * memory - stochastic)


def measured_order(ns: Sequence[int], errors: Sequence[float]) -> List[float]:
    """log2 error ratios between successive refinements (n doubling)."""
    out = []
    for (n1, e1), (n2, e2) in zip(zip(ns, errors), zip(ns[1:], errors[1:])):
        if e1 > 0 and e2 > 0:
            out.append(math.log(e1 / e2) / math.log(n2 / n1))
        else:
            out.append(float("nan"))
    return out


def riemann_convergence_table(cfg: experiment.ExperimentConfig, ns: Sequence[int] = (64, 128, 256),
                              t: Optional[float] = None, reference_n: Optional[int] = None) -> pd.DataFrame:
    """
    Bias of the left-point scheme: exact scheme covariance at each n against the
    analytic convolution covariance on a reference grid.
    """
    t = cfg.grid.T if t is None else t
    reference_n = reference_n or max(ns)
    ref = experiment.build(experiment.validate(_with_steps(cfg, reference_n)))
    target = covariance.convolution_covariance(ref.table, ref.F, ref.model, ref.H, t).entries
    norm = np.linalg.norm(target)
    rows = []
    for n in ns:
        setup = experiment.build(experiment.validate(_with_steps(cfg, n)))
        scheme = stochconv.riemann_scheme_covariance(setup.table, setup.F, setup.model.lam, setup.H, t)
        err = np.linalg.norm(scheme - target)
        rows.append({"n": n, "abs_error": err, "rel_error": err / norm if norm > 0 else err})
    df = pd.DataFrame(rows)
    df["order"] = [float("nan")] + measured_order(df["n"].tolist(), df["abs_error"].tolist())
    return df


def _with_steps(cfg: experiment.ExperimentConfig, n: int) -> experiment.ExperimentConfig:
    return replace(cfg, grid=replace(cfg.grid, n=int(n)))


def refinement_steps(cfg: experiment.ExperimentConfig, levels: int = config.REFINEMENT_LEVELS) -> List[int]:
    """The configured step count and its successive halvings, coarsest first."""
    return sorted({max(1, cfg.grid.n >> k) for k in range(levels)})


def weak_residual_table(cfg: experiment.ExperimentConfig, ns: Sequence[int] = (64, 128, 256),
                        t: Optional[float] = None, replicas: int = config.WEAK_RESIDUAL_REPLICAS) -> pd.DataFrame:
    """Weak-form residual of simulated paths at t, worst mode, averaged over replicas, per step count."""
    t = cfg.grid.T if t is None else t
    seed = cfg.monte_carlo.seed
    ids = list(range(replicas))
    rows = []
    for n in ns:
        setup = experiment.build(experiment.validate(_with_steps(cfg, n)))
        coords, method = sample_hilbert_fbm_batch(setup.model, setup.grid, setup.H, seed, ids)
        worst = []
        for r in ids:
            noise = HilbertPath(setup.grid, coords[r], HurstParameter(setup.H), seed, method, (r,))
            path = stochconv.simulate_weak_solution(setup.x0, setup.table, setup.F, noise)
            worst.append(max(weak_residual(path, noise, setup.model, setup.kernel, k, t, setup.F)
                             for k in range(setup.model.K)))
        rows.append({"n": n, "residual": float(np.mean(worst))})
    df = pd.DataFrame(rows)
    df["order"] = [float("nan")] + measured_order(df["n"].tolist(), df["residual"].tolist())
    return df
