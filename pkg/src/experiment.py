"""Experiment configuration: TOML parsing with field-path errors, serialization, presets, model assembly."""

import hashlib
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import config
from src.errors import ConfigError, FvsimError
from src.fbm import TimeGrid
from src.resolvent import Kernel, ResolventTable, build_resolvent_table
from src.spectral import LambdaFamily, MuFamily, OperatorField, SpectralModel

KERNEL_KINDS = ("power", "constant")
LAMBDA_KINDS = ("power", "explicit")
SPECTRUM_KINDS = ("dirichlet", "zero", "explicit")
INTEGRAND_KINDS = ("identity", "diagonal_constant", "zero", "csv")
ROUTES = ("riemann", "exact_gaussian")


@dataclass(frozen=True)
class GridSection:
    T: float = 1.0
    n: int = 256


@dataclass(frozen=True)
class NoiseSection:
    hurst: float = 0.5
    K: int = 1
    family: str = "power"
    p: float = 2.0
    scale: float = 1.0
    values: Tuple[float, ...] = ()


@dataclass(frozen=True)
class OperatorSection:
    kernel: str = "power"
    alpha: float = 1.0
    c: float = 1.0
    spectrum: str = "dirichlet"
    coefficient: float = 1.0
    values: Tuple[float, ...] = ()


@dataclass(frozen=True)
class IntegrandSection:
    kind: str = "identity"
    values: Tuple[float, ...] = ()
    path: str = ""
    x0: Tuple[float, ...] = ()


@dataclass(frozen=True)
class MonteCarloSection:
    replicas: int = 1000
    seed: int = field(default_factory=config.get_default_seed)
    route: str = "riemann"
    times: Tuple[float, ...] = ()


@dataclass(frozen=True)
class OutputSection:
    dir: str = ""


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    grid: GridSection = field(default_factory=GridSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    operator: OperatorSection = field(default_factory=OperatorSection)
    integrand: IntegrandSection = field(default_factory=IntegrandSection)
    monte_carlo: MonteCarloSection = field(default_factory=MonteCarloSection)
    output: OutputSection = field(default_factory=OutputSection)

    @property
    def output_dir(self) -> Path:
        return Path(self.output.dir) if self.output.dir else config.get_output_dir() / self.name

    @property
    def check_times(self) -> Tuple[float, ...]:
        return self.monte_carlo.times or (self.grid.T,)


_SECTIONS = {
    "grid": GridSection,
    "noise": NoiseSection,
    "operator": OperatorSection,
    "integrand": IntegrandSection,
    "monte_carlo": MonteCarloSection,
    "output": OutputSection,
}


def _coerce(path: str, value, default):
    """Cast a TOML value to the type of the dataclass default."""
    try:
        if isinstance(default, bool):
            return bool(value)
        if isinstance(default, (int, float)) and isinstance(value, (str, bool)):
            raise ValueError("expected a number")
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError("expected an integer")
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            if not isinstance(value, (list, tuple)):
                raise ValueError("expected a list")
            return tuple(float(v) for v in value)
        if isinstance(default, str):
            if not isinstance(value, str):
                raise ValueError("expected a string")
            return value
    except (TypeError, ValueError) as e:
        raise ConfigError(path, str(e)) from None
    return value


def _section(name: str, raw: dict):
    cls = _SECTIONS[name]
    if not isinstance(raw, dict):
        raise ConfigError(name, "must be a table")
    defaults = cls()
    known = set(asdict(defaults))
    for key in raw:
        if key not in known:
            raise ConfigError(f"{name}.{key}", "unknown field")
    kwargs = {k: _coerce(f"{name}.{k}", raw[k], getattr(defaults, k)) for k in raw}
    return cls(**kwargs)


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    """Enforce every module precondition; raises ConfigError naming the offending field."""
    g, nz, op, ig, mc = cfg.grid, cfg.noise, cfg.operator, cfg.integrand, cfg.monte_carlo
    if not (np.isfinite(g.T) and g.T > 0):
        raise ConfigError("grid.T", f"must be positive, got {g.T}")
    if g.n < 1:
        raise ConfigError("grid.n", f"must be a positive integer, got {g.n}")
    if not 0.0 < nz.hurst < 1.0:
        raise ConfigError("noise.hurst", f"must lie in (0, 1), got {nz.hurst}")
    if nz.K < 1:
        raise ConfigError("noise.K", f"must be a positive integer, got {nz.K}")
    if nz.family not in LAMBDA_KINDS:
        raise ConfigError("noise.family", f"must be one of {LAMBDA_KINDS}, got {nz.family!r}")
    if nz.family == "power":
        if not nz.p > 1.0:
            raise ConfigError("noise.p", f"must exceed 1 for a trace-class covariance, got {nz.p}")
        if nz.scale < 0:
            raise ConfigError("noise.scale", f"must be nonnegative, got {nz.scale}")
    else:
        if len(nz.values) != nz.K:
            raise ConfigError("noise.values", f"needs {nz.K} weights, got {len(nz.values)}")
        if any(v < 0 for v in nz.values):
            raise ConfigError("noise.values", "weights must be nonnegative")
    if op.kernel not in KERNEL_KINDS:
        raise ConfigError("operator.kernel", f"must be one of {KERNEL_KINDS}, got {op.kernel!r}")
    if op.kernel == "power" and not op.alpha > 0:
        raise ConfigError("operator.alpha", f"must be positive, got {op.alpha}")
    if op.spectrum not in SPECTRUM_KINDS:
        raise ConfigError("operator.spectrum", f"must be one of {SPECTRUM_KINDS}, got {op.spectrum!r}")
    if op.spectrum == "explicit" and len(op.values) != nz.K:
        raise ConfigError("operator.values", f"needs {nz.K} eigenvalues, got {len(op.values)}")
    if ig.kind not in INTEGRAND_KINDS:
        raise ConfigError("integrand.kind", f"must be one of {INTEGRAND_KINDS}, got {ig.kind!r}")
    if ig.kind == "diagonal_constant" and len(ig.values) != nz.K:
        raise ConfigError("integrand.values", f"needs {nz.K} diagonal entries, got {len(ig.values)}")
    if ig.kind == "csv" and not ig.path:
        raise ConfigError("integrand.path", "required for a tabulated integrand")
    if ig.x0 and len(ig.x0) != nz.K:
        raise ConfigError("integrand.x0", f"needs {nz.K} coordinates, got {len(ig.x0)}")
    if mc.replicas < 1:
        raise ConfigError("monte_carlo.replicas", f"must be at least 1, got {mc.replicas}")
    if mc.seed < 0:
        raise ConfigError("monte_carlo.seed", f"must be unsigned, got {mc.seed}")
    if mc.route not in ROUTES:
        raise ConfigError("monte_carlo.route", f"must be one of {ROUTES}, got {mc.route!r}")
    grid = TimeGrid(g.T, g.n)
    for t in mc.times:
        try:
            grid.node_index(t)
        except FvsimError:
            raise ConfigError("monte_carlo.times", f"{t} is not a grid node") from None
    return cfg


def parse(raw: dict) -> ExperimentConfig:
    for key in raw:
        if key != "name" and key not in _SECTIONS:
            raise ConfigError(key, "unknown section")
    name = raw.get("name", "experiment")
    if not isinstance(name, str) or not name:
        raise ConfigError("name", "must be a nonempty string")
    sections = {k: _section(k, raw[k]) for k in _SECTIONS if k in raw}
    return validate(ExperimentConfig(name=name, **sections))


def to_dict(cfg: ExperimentConfig) -> dict:
    out = {"name": cfg.name}
    for key in _SECTIONS:
        out[key] = {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(getattr(cfg, key)).items()}
    return out


def dumps(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))


def loads(text: str) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError("<file>", f"invalid TOML: {e}") from None
    return parse(raw)


def load(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError("--config", f"{path} does not exist")
    return loads(path.read_text())


def load_preset(name: str) -> ExperimentConfig:
    return load(config.PRESETS_DIR / f"{name}.toml")


def resolve(source: str) -> ExperimentConfig:
    """A path to a TOML file, or the name of a shipped preset."""
    path = Path(source)
    if path.suffix == ".toml" or path.exists():
        return load(path)
    return load_preset(source)


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(dumps(cfg).encode()).hexdigest()


def with_overrides(cfg: ExperimentConfig, seed: Optional[int] = None, replicas: Optional[int] = None,
                   out: Optional[str] = None, hurst: Optional[float] = None, route: Optional[str] = None,
                   times: Optional[Tuple[float, ...]] = None) -> ExperimentConfig:
    """Apply CLI flags and re-validate."""
    mc = cfg.monte_carlo
    if seed is not None:
        mc = replace(mc, seed=int(seed))
    if replicas is not None:
        mc = replace(mc, replicas=int(replicas))
    if route is not None:
        mc = replace(mc, route=route)
    if times is not None:
        mc = replace(mc, times=tuple(float(t) for t in times))
    noise = cfg.noise if hurst is None else replace(cfg.noise, hurst=float(hurst))
    output = cfg.output if out is None else replace(cfg.output, dir=str(out))
    return validate(replace(cfg, monte_carlo=mc, noise=noise, output=output))


@dataclass(frozen=True, eq=False)
class Setup:
    """Everything the library needs for one experiment, built once from a config."""

    config: ExperimentConfig
    grid: TimeGrid
    model: SpectralModel
    kernel: Kernel
    table: ResolventTable
    F: OperatorField
    x0: np.ndarray

    @property
    def H(self) -> float:
        return self.config.noise.hurst


def build_kernel(op: OperatorSection) -> Kernel:
    if op.kernel == "constant":
        return Kernel.constant(op.c)
    return Kernel.power(op.alpha)


def build_integrand(ig: IntegrandSection, grid: TimeGrid, K: int) -> OperatorField:
    if ig.kind == "identity":
        return OperatorField.identity(grid, K)
    if ig.kind == "zero":
        return OperatorField.zeros(grid, K)
    if ig.kind == "diagonal_constant":
        return OperatorField.diagonal_constant(grid, ig.values)
    path = Path(ig.path)
    if not path.is_absolute():
        path = config.BASE_DIR / path
    try:
        return OperatorField.from_csv(path, grid, K)
    except (OSError, FvsimError) as e:
        raise ConfigError("integrand.path", str(e)) from None


def build(cfg: ExperimentConfig) -> Setup:
    grid = TimeGrid(cfg.grid.T, cfg.grid.n)
    nz, op = cfg.noise, cfg.operator
    lam = LambdaFamily(nz.family, nz.p, nz.scale, nz.values)
    mu = MuFamily(op.spectrum, op.coefficient, op.values)
    model = SpectralModel.from_families(nz.K, lam, mu)
    kernel = build_kernel(op)
    table = build_resolvent_table(model.mu, kernel, grid)
    F = build_integrand(cfg.integrand, grid, nz.K)
    x0 = np.asarray(cfg.integrand.x0, dtype=float) if cfg.integrand.x0 else np.zeros(nz.K)
    return Setup(cfg, grid, model, kernel, table, F, x0)
