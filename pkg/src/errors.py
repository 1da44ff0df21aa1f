"""Exception types and the errors.log writer."""

from datetime import datetime, timezone
from typing import Optional

import config


class FvsimError(Exception):
    """Base class for every failure raised by the library."""


class DomainError(FvsimError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class SingularityError(DomainError):
    """Evaluation exactly at a singular point of a kernel."""


class GridMismatchError(FvsimError, ValueError):
    """Inputs sampled on different time grids."""


class SamplerError(FvsimError):
    """Exact Gaussian sampling is impossible for the requested inputs."""


class StepFailure(FvsimError):
    """Implicit time step of the resolvent solver is singular."""

    def __init__(self, node: int, message: str):
        super().__init__(f"node {node}: {message}")
        self.node = node


class ResolventError(FvsimError):
    """Resolvent construction failed for one eigenmode."""

    def __init__(self, mode: int, cause: Exception):
        super().__init__(f"mode {mode}: {cause}")
        self.mode = mode
        self.cause = cause


class PSDRepairError(FvsimError):
    """Covariance matrix is negative beyond roundoff."""


class InternalConsistencyError(FvsimError):
    """Two computations that must agree did not."""


class UnsupportedError(FvsimError):
    """Valid request that this library deliberately does not implement."""


class MittagLefflerOverflowError(FvsimError, OverflowError):
    """Mittag-Leffler value exceeds the floating point range."""


class ConfigError(FvsimError, ValueError):
    """Invalid experiment configuration; message starts with the field path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class FractionalAccuracyWarning(UserWarning):
    """Result is valid but some nodes carry reduced accuracy."""


def log_error(msg: str, path: Optional[str] = None) -> None:
    """Append one timestamped line to errors.log."""
    target = path or config.ERRORS_LOG_PATH
    with open(target, "a") as f:
        f.write(f"[{datetime.now(timezone.utc).isoformat()}] {msg}\n")
