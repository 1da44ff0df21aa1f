"""Configuration for the fractional Volterra simulator."""

from dotenv import load_dotenv
from pathlib import Path

load_dotenv(Path(__file__).parent / ".env")

import os

BASE_DIR = Path(__file__).parent
PRESETS_DIR = BASE_DIR / "presets"
DEFAULT_OUTPUT_DIR = BASE_DIR / "output"
ERRORS_LOG_PATH = BASE_DIR / "errors.log"
RUNS_DATABASE_PATH = BASE_DIR / "runs.db"

# Statistical gate: |z| above this many standard errors fails an entry
GATE_Z = 4.0
# Fraction of gated entries allowed to fail before a run is declared failed
CALIBRATION_ALLOWANCE = 0.01
# Injected fault multiplies the analytic covariance by this factor
FAULT_SCALE = 1.5
# Riemann-route refinement reports use this many step counts: n, n/2, n/4, ...
REFINEMENT_LEVELS = 3
WEAK_RESIDUAL_REPLICAS = 8

# Circulant embedding eigenvalues below -tol * max are treated as a failed embedding
CIRCULANT_NEGATIVE_TOL = 1e-10
# Cholesky fallback: eigenvalues below -tol * max mean the matrix is not PSD
CHOLESKY_PSD_TOL = 1e-10
# Covariance matrices: eigenvalues below -tol * spectral radius are rejected
COVARIANCE_PSD_TOL = 1e-8
COVARIANCE_SYMMETRY_TOL = 1e-12
ADJOINT_IDENTITY_TOL = 1e-10

# Mittag-Leffler: double precision series inside this radius on the negative axis
MITTAG_LEFFLER_SERIES_RADIUS = 1.0
MITTAG_LEFFLER_SERIES_RTOL = 1e-14
MITTAG_LEFFLER_QUAD_RTOL = 1e-12
# alpha > 1: asymptotic expansion once |z|^(1/alpha) exceeds this
MITTAG_LEFFLER_ASYMPTOTIC_ROOT = 50.0

# Riemann route is unreliable for strongly anti-persistent noise
RIEMANN_MIN_HURST = 0.4

DEFAULT_SEED = 20240501
DEFAULT_CHUNK_SIZE = 1000


def get_output_dir() -> Path:
    raw = os.environ.get("FVSIM_OUTPUT_DIR", "").strip()
    return Path(raw) if raw else DEFAULT_OUTPUT_DIR


def get_default_seed() -> int:
    raw = os.environ.get("FVSIM_SEED", "").strip()
    return int(raw) if raw else DEFAULT_SEED


def get_chunk_size() -> int:
    """Replicas simulated per vectorized batch in the Monte Carlo harness."""
    raw = os.environ.get("FVSIM_CHUNK_SIZE", "").strip()
    return max(1, int(raw)) if raw else DEFAULT_CHUNK_SIZE
