"""Output writers and the run ledger."""

import numpy as np
import pandas as pd

from src import database, reports
from src.covariance import CovarianceMatrix
from src.fbm import HurstParameter, TimeGrid
from src.resolvent import Kernel, build_resolvent_table
from src.spectral import HilbertPath


def test_covariance_csv_round_trip(tmp_path):
    cov = CovarianceMatrix(0.5, np.array([[2.0, 0.1], [0.3, 1.0]]), 0.7, "constant(c=1)", t2=1.0, cross=True)
    path = reports.write_covariance_csv(tmp_path / "c.csv", cov, {"route": "double"})
    header, matrix = reports.read_covariance_csv(path)
    assert header["symmetric"] == "false"
    assert header["t2"] == "1.0" and header["route"] == "double"
    np.testing.assert_array_equal(matrix, cov.entries)


def test_covariance_csv_is_bit_exact(tmp_path):
    rng = np.random.default_rng(3)
    a = rng.standard_normal((4, 4)) / 3.0
    entries = a @ a.T + np.full((4, 4), 0.1 + 0.2)
    cov = CovarianceMatrix(1.0, entries, 0.3, "power(alpha=0.5)")
    _, matrix = reports.read_covariance_csv(reports.write_covariance_csv(tmp_path / "c.csv", cov))
    np.testing.assert_array_equal(matrix, entries)


def test_path_frame():
    g = TimeGrid(1.0, 2)
    path = HilbertPath(g, np.array([[0.0, 1.0, 2.0], [0.0, -1.0, -2.0]]), HurstParameter(0.5))
    df = reports.path_frame(path, 4)
    assert len(df) == 6
    assert (df["replica"] == 4).all()
    row = df[(df["k"] == 1) & (df["node"] == 2)].iloc[0]
    assert row["t"] == 1.0 and row["value"] == -2.0


def test_resolvent_frame():
    g = TimeGrid(1.0, 4)
    table = build_resolvent_table([0.0, -1.0], Kernel.power(1.0), g)
    df = reports.resolvent_frame(table)
    assert len(df) == 10
    assert (df[df["k"] == 0]["value"] == 1.0).all()


def test_manifest_lists_relative_paths(tmp_path):
    a = reports.write_text(tmp_path / "sub" / "a.txt", "hello")
    b = reports.write_frame(tmp_path / "b.csv", pd.DataFrame({"x": [1.5]}))
    reports.write_manifest(tmp_path, "validate", {"name": "demo"}, [b, a], {"passed": True})
    manifest = reports.read_manifest(tmp_path)
    assert [f["path"] for f in manifest["files"]] == ["b.csv", "sub/a.txt"]
    assert manifest["files"][1]["sha256"] == reports.file_sha256(a)
    assert manifest["passed"] is True
    assert a.read_text() == "hello\n"


def test_run_ledger():
    database.init_database()
    first = database.log_run("simulate", config_hash="abc", seed=1, replicas=10, passed=True)
    second = database.log_run("validate", passed=False, summary="3/100 failures")
    assert second > first
    logs = database.get_run_logs(limit=1)
    assert len(logs) == 1
    assert logs[0]["command"] == "validate" and logs[0]["passed"] == 0
