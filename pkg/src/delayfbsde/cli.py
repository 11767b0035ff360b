"""Command line entry point: ``delayfbsde <subcommand> --config cfg.json``.

Each run writes ``<out>/<subcommand>.csv`` and ``<out>/summary.json``.
Exit codes: 0 success, 2 invalid configuration, 3 unconverged or NaN results.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import _kernels
from .asymptotics import cauchy_rate, conditional_variation, deviation_probabilities, fit_power, moment_bounds, uniform_partition
from .backward import deterministic_backward, solve_bsde
from .config import ConfigError, ExperimentConfig, load_config
from .forward import CoefficientBlowUp, NonContraction, deterministic_forward, simulate_ensemble
from .ldp import ldp_slope_check
from .noise import brownian_increments

log = logging.getLogger("delayfbsde")

SUBCOMMANDS = ("simulate", "converge", "deviation", "variation", "ldp")

COLUMNS = {
    "simulate": ["epsilon", "path", "t", "X", "Y", "Z"],
    "skeleton": ["t", "X", "Y"],
    "converge": ["eps1", "eps2", "M", "statistic", "value", "se", "scale", "C"],
    "converge_moments": ["epsilon", "M", "statistic", "value", "se", "per_statistic"],
    "deviation": ["epsilon", "delta", "component", "count", "M", "p_hat", "ci_low", "ci_high"],
    "variation": ["epsilon", "intervals", "M", "V_hat", "se", "terminal_term"],
    "ldp": ["delta", "epsilon", "count", "M", "p_hat", "ci_low", "ci_high", "eps_log_p", "used"],
}


class Unconverged(RuntimeError):
    pass


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, name: str, rows: list[dict]) -> None:
    cols = COLUMNS[name]
    with open(path / f"{name}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in cols])


def _has_nan(obj) -> bool:
    if isinstance(obj, float):
        return math.isnan(obj)
    if isinstance(obj, dict):
        return any(_has_nan(v) for v in obj.values())
    if isinstance(obj, (list, tuple)):
        return any(_has_nan(v) for v in obj)
    return False


def _need(cfg: ExperimentConfig, key: str):
    if not getattr(cfg, key):
        raise ConfigError(key, "required by this subcommand")


# ---------------------------------------------------------------- pipelines

def run_simulate(cfg, coeffs, threads):
    _need(cfg, "epsilons")
    grid = cfg.grid
    N = grid.N
    tol = cfg.tolerances
    X0 = deterministic_forward(coeffs, grid, cfg.x)
    Y0 = deterministic_backward(coeffs, X0, grid)
    tables = {"skeleton": [{"t": t, "X": X0.forward[i], "Y": Y0.forward[i]} for i, t in enumerate(grid.nodes)]}
    dW = brownian_increments(cfg.seed, cfg.M, grid, threads)
    rows, results = [], []
    for e in cfg.epsilons:
        ens = simulate_ensemble(coeffs, e, grid, cfg.M, cfg.x, cfg.seed, dW=dW)
        sol = solve_bsde(coeffs, ens, basis_degree=tol["basis_degree"], tol=tol["bsde_tol"],
                         max_iter=tol["max_iter"])
        for m in range(min(cfg.emit_paths, cfg.M)):
            for i, t in enumerate(grid.nodes):
                rows.append({"epsilon": e, "path": m, "t": t, "X": ens.X[m, N + i],
                             "Y": sol.Y[m, N + i], "Z": sol.Z[m, N + i]})
        results.append({"epsilon": e, "mean_Y0": float(np.mean(sol.Y[:, N])),
                        "mean_Z": float(np.mean(sol.Z[:, N:2 * N])),
                        "mean_XT": float(np.mean(ens.X[:, 2 * N])),
                        "picard_iterations": sol.picard_iterations,
                        "regression_basis_size": sol.regression_basis_size,
                        "ridge_steps": sol.ridge_steps})
    tables["simulate"] = rows
    return tables, {"runs": results}


def run_converge(cfg, coeffs, threads):
    if not cfg.epsilon_pairs and not cfg.epsilons:
        raise ConfigError("epsilon_pairs", "required by this subcommand")
    grid = cfg.grid
    tol = cfg.tolerances
    kw = dict(basis_degree=tol["basis_degree"], tol=tol["bsde_tol"], max_iter=tol["max_iter"])
    dW = brownian_increments(cfg.seed, cfg.M, grid, threads)
    rows, pairs = [], []
    for e1, e2 in cfg.epsilon_pairs:
        rep = cauchy_rate(coeffs, e1, e2, grid, cfg.M, cfg.x, cfg.seed, dW=dW, **kw)
        for k in ("X", "Y", "Z"):
            rows.append({"eps1": e1, "eps2": e2, "M": cfg.M, "statistic": k,
                         "value": rep.statistics[k], "se": rep.standard_errors[k],
                         "scale": rep.scale, "C": rep.implied_constants[k]})
        pairs.append({"eps1": e1, "eps2": e2, "statistics": rep.statistics,
                      "standard_errors": rep.standard_errors, "C": rep.implied_constants})
    moments, mrows = [], []
    if cfg.epsilons and cfg.M >= 100:
        for e in cfg.epsilons:
            mb = moment_bounds(coeffs, e, grid, cfg.M, cfg.x, cfg.seed, dW=dW, **kw)
            per = mb.per_statistic
            vals = {"X": mb.sup_X2, "Y": mb.sup_Y2, "Z": mb.int_Z2}
            for k in ("X", "Y", "Z"):
                mrows.append({"epsilon": e, "M": cfg.M, "statistic": k, "value": vals[k],
                              "se": mb.se[k], "per_statistic": per[k]})
            moments.append({"epsilon": e, "C2": mb.C2, "per_statistic": per})
    tables = {"converge": rows}
    if cfg.epsilons:
        tables["converge_moments"] = mrows
    return tables, {"pairs": pairs, "moments": moments}


def run_deviation(cfg, coeffs, threads):
    _need(cfg, "epsilons")
    _need(cfg, "deltas")
    grid = cfg.grid
    tol = cfg.tolerances
    dW = brownian_increments(cfg.seed, cfg.M, grid, threads)
    rows, by_delta = [], {d: [] for d in cfg.deltas}
    for e in cfg.epsilons:
        ests = deviation_probabilities(coeffs, e, cfg.deltas, grid, cfg.M, cfg.x, cfg.seed,
                                       component=cfg.component, threads=threads, dW=dW,
                                       basis_degree=tol["basis_degree"], tol=tol["bsde_tol"],
                                       max_iter=tol["max_iter"])
        for est in ests:
            lo, hi = est.ci
            rows.append({"epsilon": e, "delta": est.delta, "component": est.component, "count": est.count,
                         "M": est.M, "p_hat": est.p_hat, "ci_low": lo, "ci_high": hi})
            by_delta[est.delta].append(est)
    fits = []
    for d, ests in by_delta.items():
        entry = {"delta": d, "monotone": all(a.p_hat >= b.p_hat for a, b in zip(ests, ests[1:]))}
        if len(ests) >= 2:
            entry["slope"], entry["C"] = fit_power([s.eps for s in ests], [s.p_hat for s in ests], cfg.M)
        fits.append(entry)
    return {"deviation": rows}, {"fits": fits}


def run_variation(cfg, coeffs, threads):
    _need(cfg, "epsilons")
    grid = cfg.grid
    tol = cfg.tolerances
    for i, n in enumerate(cfg.partitions):
        if grid.N % n:
            raise ConfigError(f"partitions[{i}]", f"{n} intervals do not nest in N={grid.N}")
    dW = brownian_increments(cfg.seed, cfg.M, grid, threads)
    rows, out = [], []
    for e in cfg.epsilons:
        ens = simulate_ensemble(coeffs, e, grid, cfg.M, cfg.x, cfg.seed, dW=dW)
        sol = solve_bsde(coeffs, ens, basis_degree=tol["basis_degree"], tol=tol["bsde_tol"],
                         max_iter=tol["max_iter"])
        for n in cfg.partitions:
            rep = conditional_variation(sol.Y, ens.X, coeffs, uniform_partition(grid, n), grid,
                                        degree=tol["basis_degree"])
            rows.append({"epsilon": e, "intervals": n, "M": cfg.M, "V_hat": rep.V_hat, "se": rep.se,
                         "terminal_term": rep.terminal_term})
            out.append({"epsilon": e, "intervals": n, "V_hat": rep.V_hat, "se": rep.se})
    return {"variation": rows}, {"variation": out}


def run_ldp(cfg, coeffs, threads):
    _need(cfg, "epsilons")
    _need(cfg, "deltas")
    grid = cfg.grid
    tol = cfg.tolerances
    rows, out = [], []
    for d in cfg.deltas:
        rep = ldp_slope_check(coeffs, d, cfg.epsilons, cfg.M, grid, cfg.x, cfg.seed, threads=threads,
                              basis_degree=tol["basis_degree"], rate_budget=tol["rate_budget"])
        for est, elp in zip(rep.estimates, rep.eps_log_p):
            lo, hi = est.ci
            rows.append({"delta": d, "epsilon": est.eps, "count": est.count, "M": est.M, "p_hat": est.p_hat,
                         "ci_low": lo, "ci_high": hi, "eps_log_p": elp, "used": est.count > 0})
        if not rep.fitted:
            raise Unconverged(f"fewer than two epsilons with non-zero counts at delta={d}")
        if not all(r.converged for r in rep.rate_results):
            raise Unconverged(f"action minimization did not reach the residual tolerance at delta={d}")
        out.append({"delta": d, "slope": rep.slope, "I2_star": rep.I2_star, "predicted": rep.predicted,
                    "ratio": rep.ratio, "dropped_epsilons": rep.dropped_eps})
    return {"ldp": rows}, {"ldp": out}


PIPELINES = {"simulate": run_simulate, "converge": run_converge, "deviation": run_deviation,
             "variation": run_variation, "ldp": run_ldp}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="delayfbsde", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="JSON experiment file")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--seed", type=int, help="overrides the config seed")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    start = time.perf_counter()
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("--seed", "must be an unsigned 64-bit integer")
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = args.out
        if cfg.out is None:
            raise ConfigError("out", "no output directory given")
        if args.threads < 1:
            raise ConfigError("--threads", "must be positive")
        coeffs = cfg.coefficients()
        grid = cfg.grid
        contraction = {"K": coeffs.lipschitz, "value": coeffs.contraction_number(grid.T),
                       "satisfied": coeffs.contracting(grid.T)}
        if not contraction["satisfied"]:
            log.warning("8 K e max(1, T) = %.4g >= 1; results are outside the contraction regime",
                        contraction["value"])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            tables, results = PIPELINES[args.subcommand](cfg, coeffs, args.threads)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except (NonContraction, CoefficientBlowUp, FloatingPointError, Unconverged) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, rows in tables.items():
        write_csv(out, name, rows)
    status = 3 if _has_nan(results) else 0
    summary = {
        "subcommand": args.subcommand,
        "config": cfg.echo(),
        "seed": cfg.seed,
        "backend": _kernels.backend(),
        "contraction": contraction,
        "results": results,
        "status": "ok" if status == 0 else "nan",
        "wall_time_s": time.perf_counter() - start,
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    if status:
        print("numerical failure: NaN in results", file=sys.stderr)
    return status


def main() -> None:
    sys.exit(run())
