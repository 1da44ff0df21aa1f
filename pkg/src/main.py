"""Fractional Volterra simulator - command-line driver."""

from dotenv import load_dotenv
from pathlib import Path
load_dotenv(Path(__file__).parent.parent / ".env")

import argparse
import sys
import warnings
from typing import List, Optional

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pandas as pd

import config
from src import covariance, database, experiment, reports, stochconv, validation
from src.errors import FvsimError, log_error
from src.fbm import HurstParameter, TimeGrid, hurst_value
from src.fraccalc import SampledFunction
from src.resolvent import discrete_residual, resolvent_derivative_residual
from src.spectral import HilbertPath, sample_hilbert_fbm_batch

EXIT_OK = 0
EXIT_GATE_FAILED = 1
EXIT_ERROR = 2

ISOMETRY_FUNCTIONS = {"1": 0, "s": 1, "s2": 2}
ISOMETRY_TOLERANCE = 1e-3


def _log_warnings(caught) -> None:
    for w in caught:
        msg = f"{w.category.__name__}: {w.message}"
        print(f"Warning: {msg}")
        log_error(msg)


def _config_from_args(args) -> experiment.ExperimentConfig:
    cfg = experiment.resolve(args.config)
    return experiment.with_overrides(
        cfg,
        seed=getattr(args, "seed", None),
        replicas=getattr(args, "replicas", None),
        out=getattr(args, "out", None),
        hurst=getattr(args, "hurst", None),
        route=getattr(args, "route", None),
    )


def cmd_simulate(cfg: experiment.ExperimentConfig) -> dict:
    """Weak-solution paths, one CSV per replica, plus the manifest."""
    setup = experiment.build(cfg)
    out_dir = cfg.output_dir
    N = cfg.monte_carlo.replicas
    seed = cfg.monte_carlo.seed
    print(f"Simulating {N} paths: K={setup.model.K}, n={setup.grid.n}, H={setup.H}, kernel={setup.kernel.describe()}")
    files = []
    chunk = config.get_chunk_size()
    for start in range(0, N, chunk):
        ids = list(range(start, min(N, start + chunk)))
        coords, method = sample_hilbert_fbm_batch(setup.model, setup.grid, setup.H, seed, ids)
        for r, replica in enumerate(ids):
            noise = HilbertPath(setup.grid, coords[r], HurstParameter(setup.H), seed, method, (replica,))
            path = stochconv.simulate_weak_solution(setup.x0, setup.table, setup.F, noise)
            files.append(reports.write_path_csv(out_dir / "paths" / f"replica_{replica:05d}.csv", path, replica))
        print(f"Progress: {len(files)}/{N} paths written")
    manifest = reports.write_manifest(out_dir, "simulate", experiment.to_dict(cfg), files,
                                      {"sampler": method})
    return {"out_dir": out_dir, "files": files + [manifest], "passed": True,
            "summary": f"{N} paths, sampler={method}"}


def cmd_covariance(cfg: experiment.ExperimentConfig, t: Optional[float] = None, t2: Optional[float] = None) -> dict:
    """Covariance of the stochastic convolution at node t (two-time when t2 is given)."""
    setup = experiment.build(cfg)
    t = cfg.grid.T if t is None else t
    setup.grid.node_index(t)
    if t2 is None:
        cov = covariance.convolution_covariance(setup.table, setup.F, setup.model, setup.H, t)
        name = f"covariance_t{t:g}.csv"
    else:
        cov = covariance.two_time_covariance(setup.table, setup.F, setup.model, setup.H, t, t2)
        name = f"covariance_t{t:g}_t{t2:g}.csv"
    out_dir = cfg.output_dir
    target = reports.write_covariance_csv(out_dir / name, cov)
    manifest = reports.write_manifest(out_dir, "covariance", experiment.to_dict(cfg), [target])
    print(f"Covariance at t={t:g}: trace={np.trace(cov.entries):.6g}")
    return {"out_dir": out_dir, "files": [target, manifest], "passed": True, "covariance": cov,
            "summary": f"t={t:g} trace={np.trace(cov.entries):.6g}"}


def cmd_validate(cfg: experiment.ExperimentConfig, inject_fault: bool = False) -> dict:
    """Monte Carlo vs analytic covariance; passed reflects the 4-SE gate with the calibration allowance."""
    setup = experiment.build(cfg)
    print(f"Validating {cfg.name}: N={cfg.monte_carlo.replicas}, route={cfg.monte_carlo.route}, "
          f"H={setup.H}, times={list(cfg.check_times)}" + (" [fault injected]" if inject_fault else ""))
    report = validation.validate_experiment(setup, inject_fault=inject_fault)
    out_dir = cfg.output_dir
    files = [reports.write_frame(out_dir / "validation.csv", report.table),
             reports.write_text(out_dir / "validation_summary.txt", report.summary())]
    if cfg.monte_carlo.route == stochconv.RIEMANN:
        files.extend(_refinement_reports(cfg, out_dir))
    manifest = reports.write_manifest(out_dir, "validate", experiment.to_dict(cfg), files,
                                      {"passed": report.passed, "inject_fault": inject_fault})
    print(report.summary())
    return {"out_dir": out_dir, "files": files + [manifest], "passed": report.passed,
            "report": report, "summary": f"{report.failures}/{report.entries} failures"}


def _refinement_reports(cfg: experiment.ExperimentConfig, out_dir: Path) -> List[Path]:
    """Scheme-bias convergence and weak-residual order for the riemann route."""
    if cfg.integrand.kind == "csv":
        print("Skipping refinement reports: a csv integrand is tied to its own grid")
        return []
    ns = validation.refinement_steps(cfg)
    convergence = validation.riemann_convergence_table(cfg, ns=ns)
    residuals = validation.weak_residual_table(cfg, ns=ns)
    print(f"Riemann bias orders: {convergence['order'].iloc[1:].round(3).tolist()}, "
          f"weak residual orders: {residuals['order'].iloc[1:].round(3).tolist()}")
    return [reports.write_frame(out_dir / "convergence.csv", convergence),
            reports.write_frame(out_dir / "weak_residual.csv", residuals)]


def isometry_table(H: float, t: float, n: int, functions: List[str]) -> pd.DataFrame:
    """Fractional form vs double-integral form vs closed form for monomial pairs."""
    grid = TimeGrid(t, n)
    s = grid.nodes
    c_H = covariance.isometry_constant(H).value
    rows = []
    for i, fname in enumerate(functions):
        for gname in functions[i:]:
            a, b = ISOMETRY_FUNCTIONS[fname], ISOMETRY_FUNCTIONS[gname]
            f = SampledFunction(grid, s ** a)
            g = SampledFunction(grid, s ** b)
            frac = covariance.scalar_isometry_frac(f, g, H, t)
            double = covariance.scalar_isometry_double(f, g, H, t) if H > 0.5 else float("nan")
            if H > 0.5:
                exact = covariance.monomial_double_integral(a, b, H, t)
            elif H == 0.5:
                exact = t ** (a + b + 1) / (a + b + 1)
            elif a == b == 0:
                exact = t ** (2 * H)
            else:
                exact = float("nan")
            rows.append({
                "f": fname, "g": gname, "H": H, "t": t, "n": n, "c_H": c_H,
                "frac": frac, "double": double, "analytic": exact,
                "rel_frac_double": abs(frac - double) / abs(double) if H > 0.5 else float("nan"),
                "rel_frac_analytic": abs(frac - exact) / abs(exact) if np.isfinite(exact) else float("nan"),
            })
    return pd.DataFrame(rows)


def cmd_isometry_check(H: float, t: float, n: int, functions: List[str], out_dir: Path) -> dict:
    hurst_value(H)
    unknown = [f for f in functions if f not in ISOMETRY_FUNCTIONS]
    if unknown:
        raise FvsimError(f"--functions: unknown function(s) {unknown}; choose from {sorted(ISOMETRY_FUNCTIONS)}")
    df = isometry_table(H, t, n, functions)
    worst = df[["rel_frac_double", "rel_frac_analytic"]].max(skipna=True).max(skipna=True)
    passed = bool(np.isnan(worst) or worst < ISOMETRY_TOLERANCE)
    target = reports.write_frame(out_dir / f"isometry_H{H:g}_t{t:g}.csv", df)
    manifest = reports.write_manifest(out_dir, "isometry-check", {"H": H, "t": t, "n": n, "functions": functions},
                                      [target], {"passed": passed})
    print(df.to_string(index=False))
    return {"out_dir": out_dir, "files": [target, manifest], "passed": passed, "table": df,
            "summary": f"max relative error {worst:.3e}"}


def cmd_resolvent_table(cfg: experiment.ExperimentConfig) -> dict:
    setup = experiment.build(cfg)
    table = setup.table
    out_dir = cfg.output_dir
    rows = []
    for k in range(table.K):
        row = {"k": k, "mu": table.eigenvalues[k],
               "discrete_residual": discrete_residual(table.kernel, table.eigenvalues[k], table.mode(k))}
        row["derivative_residual"] = (
            resolvent_derivative_residual(table, k) if table.kernel.differentiable else float("nan")
        )
        rows.append(row)
    values = reports.write_frame(out_dir / "resolvent.csv", reports.resolvent_frame(table))
    residuals = reports.write_frame(out_dir / "resolvent_residuals.csv", pd.DataFrame(rows))
    manifest = reports.write_manifest(out_dir, "resolvent-table", experiment.to_dict(cfg), [values, residuals])
    print(f"Resolvent table: {table.K} modes, kernel={table.kernel.describe()}, "
          f"max discrete residual={table.residual_bound:.3e}")
    return {"out_dir": out_dir, "files": [values, residuals, manifest], "passed": True,
            "summary": f"max discrete residual {table.residual_bound:.3e}"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="run.py", description="Stochastic Volterra equations driven by fractional noise")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(name: str, help_text: str):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="TOML file or preset name (heat, wave, ou, fractional)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int, help="master seed")
        sp.add_argument("--hurst", type=float, help="override noise.hurst")
        return sp

    sp = with_config("simulate", "write weak-solution path CSVs")
    sp.add_argument("--replicas", type=int)

    sp = with_config("covariance", "analytic covariance of the stochastic convolution")
    sp.add_argument("--time", type=float, help="grid node (default: horizon)")
    sp.add_argument("--time2", type=float, help="second node for E[X(t) X(t')] (H > 1/2)")

    sp = with_config("validate", "Monte Carlo vs analytic covariance")
    sp.add_argument("--replicas", type=int)
    sp.add_argument("--route", choices=experiment.ROUTES)
    sp.add_argument("--inject-fault", action="store_true", help="scale the analytic covariance by 1.5")

    sp = sub.add_parser("isometry-check", help="fractional vs double-integral isometry forms")
    sp.add_argument("--hurst", type=float, required=True)
    sp.add_argument("--time", type=float, default=1.0)
    sp.add_argument("--steps", type=int, default=1024)
    sp.add_argument("--functions", default="1,s,s2", help="comma list from 1, s, s2")
    sp.add_argument("--out", help="output directory")

    with_config("resolvent-table", "per-mode resolvent values and residuals")
    return p


def run_command(args) -> dict:
    if args.command == "isometry-check":
        out_dir = Path(args.out) if args.out else config.get_output_dir() / "isometry"
        functions = [f.strip() for f in args.functions.split(",") if f.strip()]
        return cmd_isometry_check(args.hurst, args.time, args.steps, functions, out_dir)
    cfg = _config_from_args(args)
    if args.command == "simulate":
        return cmd_simulate(cfg)
    if args.command == "covariance":
        return cmd_covariance(cfg, args.time, args.time2)
    if args.command == "validate":
        return cmd_validate(cfg, inject_fault=args.inject_fault)
    return cmd_resolvent_table(cfg)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    database.init_database()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            stats = run_command(args)
        except (FvsimError, OSError) as e:
            _log_warnings(caught)
            msg = f"{args.command} failed: {e}"
            print(f"Error: {msg}")
            log_error(msg)
            database.log_run(args.command, passed=False, summary=msg)
            return EXIT_ERROR
    _log_warnings(caught)

    cfg_hash = experiment.config_hash(_config_from_args(args)) if args.command != "isometry-check" else ""
    database.log_run(
        args.command,
        config_hash=cfg_hash,
        seed=getattr(args, "seed", None),
        replicas=getattr(args, "replicas", None) or 0,
        outputs=";".join(str(f) for f in stats["files"]),
        passed=stats["passed"],
        summary=stats["summary"],
    )
    print("\n--- Done ---")
    print(f"Output: {stats['out_dir']}")
    return EXIT_OK if stats["passed"] else EXIT_GATE_FAILED


if __name__ == "__main__":
    sys.exit(main())
