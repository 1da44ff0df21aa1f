"""Output writers: path, covariance, resolvent and validation CSVs, text summaries, manifest.json."""

import hashlib
import json
from pathlib import Path
from typing import Dict, Iterable, Optional

import numpy as np
import pandas as pd

import src
from src.covariance import CovarianceMatrix
from src.resolvent import ResolventTable
from src.spectral import HilbertPath

FLOAT_FORMAT = "%.17g"
MANIFEST_NAME = "manifest.json"


def _ensure_dir(path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def path_frame(path: HilbertPath, replica: int) -> pd.DataFrame:
    """Long format: replica, node, t, k, value."""
    K, size = path.coords.shape
    node = np.tile(np.arange(size), K)
    return pd.DataFrame({
        "replica": replica,
        "node": node,
        "t": path.grid.nodes[node],
        "k": np.repeat(np.arange(K), size),
        "value": path.coords.ravel(),
    })


def write_path_csv(out: Path, path: HilbertPath, replica: int) -> Path:
    path_frame(path, replica).to_csv(_ensure_dir(out), index=False, float_format=FLOAT_FORMAT)
    return out


def write_covariance_csv(out: Path, cov: CovarianceMatrix, extra: Optional[dict] = None) -> Path:
    """Comment header with t, H, K, kernel, then (row, col, value)."""
    header = {"t": repr(cov.t), "H": repr(cov.H), "K": str(cov.K), "kernel": cov.kernel,
              "symmetric": str(not cov.cross).lower()}
    if cov.t2 is not None:
        header["t2"] = repr(cov.t2)
    header.update({k: str(v) for k, v in (extra or {}).items()})
    rows, cols = np.indices(cov.entries.shape)
    df = pd.DataFrame({"row": rows.ravel(), "col": cols.ravel(), "value": cov.entries.ravel()})
    with open(_ensure_dir(out), "w", newline="") as f:
        for key, value in header.items():
            f.write(f"# {key}={value}\n")
        df.to_csv(f, index=False, float_format=FLOAT_FORMAT)
    return out


def read_covariance_csv(path: Path):
    """Returns (header dict, K x K matrix)."""
    header = {}
    with open(path) as f:
        for line in f:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            header[key] = value
    df = pd.read_csv(path, comment="#", float_precision="round_trip")
    K = int(header["K"])
    matrix = np.zeros((K, K))
    matrix[df["row"].to_numpy(), df["col"].to_numpy()] = df["value"].to_numpy()
    return header, matrix


def resolvent_frame(table: ResolventTable) -> pd.DataFrame:
    K, size = table.modes.shape
    node = np.tile(np.arange(size), K)
    return pd.DataFrame({
        "k": np.repeat(np.arange(K), size),
        "node": node,
        "t": table.grid.nodes[node],
        "value": table.modes.ravel(),
    })


def write_frame(out: Path, df: pd.DataFrame) -> Path:
    df.to_csv(_ensure_dir(out), index=False, float_format=FLOAT_FORMAT)
    return out


def write_text(out: Path, text: str) -> Path:
    _ensure_dir(out).write_text(text if text.endswith("\n") else text + "\n")
    return out


def file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, config_echo: dict, files: Iterable[Path],
                   extra: Optional[Dict] = None) -> Path:
    """manifest.json listing every output file with its SHA-256, relative to out_dir."""
    out_dir = Path(out_dir)
    entries = []
    for p in sorted(Path(f) for f in files):
        entries.append({"path": p.relative_to(out_dir).as_posix(), "sha256": file_sha256(p)})
    manifest = {
        "command": command,
        "version": src.__version__,
        "config": config_echo,
        "files": entries,
    }
    if extra:
        manifest.update(extra)
    target = _ensure_dir(out_dir / MANIFEST_NAME)
    target.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return target


def read_manifest(out_dir: Path) -> dict:
    return json.loads((Path(out_dir) / MANIFEST_NAME).read_text())
