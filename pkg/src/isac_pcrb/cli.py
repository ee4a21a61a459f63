"""Command-line experiment runner.

``isac <command> --config <path> [--out <path>] [--seed N] [--trials N]``

Exit status: 0 success, 2 configuration error, 3 infeasible rate target,
4 solver or numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .benchmarks import expected_crb_exact, expected_crb_inexact
from .config import ExperimentConfig, dump_config, load_config
from .estimation import GridSpec, monte_carlo_mse
from .exceptions import (ConfigError, InfeasibleError, LinAlgError, QuadratureError, SolverError,
                         UnboundedError)
from .fisher import beampattern, compute_sensing_matrices, crb_expected, pcrb, pcrb_upper, rate
from .model import ANGLE_DOMAIN
from .numerics import QuadratureSpec, numerical_rank
from .optimal import BarrierOptions, capacity_waterfilling, check_feasibility, solve_p3
from .suboptimal import EllipsoidOptions, sensing_only_upper, solve_p4

__all__ = ["main", "COMMANDS", "EXIT_OK", "EXIT_CONFIG", "EXIT_INFEASIBLE", "EXIT_SOLVER"]

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_SOLVER = 0, 2, 3, 4
BEAMPATTERN_POINTS = 1024


class Table:
    """One output table: ordered metadata, column names, units and rows."""

    def __init__(self, columns, units, meta=None):
        if len(columns) != len(units):
            raise ValueError("columns and units differ in length")
        self.columns = list(columns)
        self.units = list(units)
        self.meta = dict(meta or {})
        self.rows = []

    def add(self, *row):
        if len(row) != len(self.columns):
            raise ValueError(f"row has {len(row)} cells, expected {len(self.columns)}")
        self.rows.append(tuple(_plain(v) for v in row))

    def to_csv(self) -> str:
        lines = [f"# {k}: {_cell(v)}" for k, v in self.meta.items()]
        lines.append("# units: " + ",".join(self.units))
        lines.append(",".join(self.columns))
        lines.extend(",".join(_cell(v) for v in row) for row in self.rows)
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        doc = {"meta": {k: _json_cell(v) for k, v in self.meta.items()},
               "columns": self.columns, "units": self.units,
               "rows": [[_json_cell(v) for v in row] for row in self.rows]}
        return json.dumps(doc, indent=2) + "\n"


def _plain(v):
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    return v


def _cell(v) -> str:
    v = _plain(v)
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _json_cell(v):
    v = _plain(v)
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


# -- shared context ----------------------------------------------------------

class _Context:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.system = cfg.system
        self.prior = cfg.prior
        self.env = cfg.environment()
        self.h = cfg.channel_matrix()
        self._m = None
        self._cap = None

    @property
    def m(self):
        if self._m is None:
            self._m = compute_sensing_matrices(self.prior, self.system)
        return self._m

    @property
    def capacity(self):
        if self._cap is None:
            self._cap = capacity_waterfilling(self.h, self.system.power_w, self.system.noise_comm_w)
        return self._cap

    def require_feasible(self, rbar):
        r_max = self.capacity[0]
        if not check_feasibility(rbar, r_max):
            raise InfeasibleError(f"rate target {rbar} exceeds capacity r_max={r_max:.6f}",
                                  r_max=r_max, rbar=rbar)

    def meta(self, command, columns_note=None):
        cfg = self.cfg
        out = {
            "tool": f"isac-pcrb {__version__}",
            "command": command,
            "config_sha256": hashlib.sha256(dump_config(cfg).encode()).hexdigest(),
            "channel_seed": cfg.channel.seed,
            "rate_target": cfg.rate_target,
            "snr_db": cfg.snr_db,
            "alpha_phase_rad": cfg.alpha_phase,
            "alpha_convention": "|alpha| from P|alpha|^2 L/sigma_s^2 = snr; phase fixed by config",
            "tolerances": (f"quad_rel_tol={QuadratureSpec().rel_tol!r} "
                           f"kkt_tol={BarrierOptions().kkt_tol!r} "
                           f"ellipsoid_radius_tol={EllipsoidOptions().radius_tol!r}"),
        }
        if columns_note:
            out.update(columns_note)
        return out


# -- commands ----------------------------------------------------------------

def cmd_feasibility(ctx: _Context):
    r_max, _ = ctx.capacity
    rbar = ctx.cfg.rate_target
    ok = check_feasibility(rbar, r_max)
    t = Table(["r_max", "rbar", "feasible", "rank_h"], ["bit/s/Hz", "bit/s/Hz", "-", "-"],
              ctx.meta("feasibility"))
    t.add(r_max, rbar, ok, numerical_rank(ctx.h))
    summary = f"r_max={r_max:.6f} bit/s/Hz rbar={rbar} feasible={'yes' if ok else 'no'}"
    return t, summary, (EXIT_OK if ok else EXIT_INFEASIBLE)


def _safe(fn):
    try:
        return fn()
    except (QuadratureError, UnboundedError):
        return math.nan


def cmd_bounds(ctx: _Context):
    cfg, s, m, env, h = ctx.cfg, ctx.system, ctx.m, ctx.env, ctx.h
    ctx.require_feasible(cfg.rate_target)
    designs = [
        ("isotropic", np.eye(s.n_tx) * (s.power_w / s.n_tx)),
        ("sensing_only", sensing_only_upper(m, s.power_w)),
        ("capacity", ctx.capacity[1]),
        ("optimal", solve_p3(m, h, env, s, cfg.rate_target).w),
        ("suboptimal", solve_p4(m, h, env, s, cfg.rate_target).w),
    ]
    t = Table(["design", "rate", "pcrb", "pcrb_upper", "crb_expected"],
              ["-", "bit/s/Hz", "rad^2", "rad^2", "rad^2"],
              ctx.meta("bounds", {"fp11": m.fp11, "prior_only_bound": 1.0 / m.fp11}))
    for name, w in designs:
        t.add(name, rate(w, h, s.noise_comm_w), pcrb(w, m, env, s), pcrb_upper(w, m, env, s),
              _safe(lambda: crb_expected(w, ctx.prior, env, s)))
    opt = t.rows[3]
    return t, f"optimal design at rbar={cfg.rate_target}: pcrb={opt[2]:.6e} rad^2", EXIT_OK


def cmd_beampattern(ctx: _Context):
    s = ctx.system
    res = solve_p3(ctx.m, ctx.h, ctx.env, s, 0.0)
    lo, hi = ANGLE_DOMAIN
    grid = lo + (hi - lo) * np.arange(BEAMPATTERN_POINTS) / BEAMPATTERN_POINTS
    power = beampattern(res.w, grid, s)
    dens = ctx.prior.pdf(grid)
    t = Table(["theta", "power", "prior_density"], ["rad", "W", "1/rad"],
              ctx.meta("beampattern", {"design": "sensing-optimal (rate target 0)",
                                       "pcrb": res.pcrb_value}))
    for row in zip(grid, power, dens):
        t.add(*row)
    k = int(np.argmax(power))
    return t, f"sensing-optimal beampattern: peak {power[k]:.4f} W at theta={grid[k]:.4f} rad", EXIT_OK


def _covariance_table(ctx, command, w, summary_meta):
    t = Table(["row", "col", "re", "im"], ["-", "-", "W", "W"], ctx.meta(command, summary_meta))
    n = w.shape[0]
    for i in range(n):
        for j in range(n):
            t.add(i, j, float(w[i, j].real), float(w[i, j].imag))
    return t


def cmd_solve_optimal(ctx: _Context):
    cfg = ctx.cfg
    ctx.require_feasible(cfg.rate_target)
    r = solve_p3(ctx.m, ctx.h, ctx.env, ctx.system, cfg.rate_target)
    mu_p, mu_r, z2 = r.duals
    meta = {"pcrb": r.pcrb_value, "pcrb_upper": pcrb_upper(r.w, ctx.m, ctx.env, ctx.system),
            "rate": r.rate_value, "t_star": r.t_star, "rank": r.rank_w,
            "kkt_residual": r.kkt_residual, "iterations": r.iterations,
            "mu_p": mu_p, "mu_r": mu_r, "z2": f"{complex(z2)!r}", "boundary": r.boundary}
    t = _covariance_table(ctx, "solve-optimal", r.w, meta)
    summary = (f"optimal: pcrb={r.pcrb_value:.6e} rate={r.rate_value:.6f} rank={r.rank_w} "
               f"kkt={r.kkt_residual:.2e}")
    return t, summary, EXIT_OK


def cmd_solve_suboptimal(ctx: _Context):
    cfg = ctx.cfg
    ctx.require_feasible(cfg.rate_target)
    r = solve_p4(ctx.m, ctx.h, ctx.env, ctx.system, cfg.rate_target)
    meta = {"pcrb": r.pcrb_value, "pcrb_upper": r.pcrb_upper_value, "rate": r.rate_value,
            "rank": r.rank_w, "branch": r.branch, "iterations": r.iterations,
            "beta": r.dual.beta if r.dual else math.nan,
            "mu": r.dual.mu if r.dual else math.nan, "duality_gap": r.duality_gap}
    t = _covariance_table(ctx, "solve-suboptimal", r.w, meta)
    summary = (f"suboptimal ({r.branch}): pcrb={r.pcrb_value:.6e} "
               f"pcrb_upper={r.pcrb_upper_value:.6e} rate={r.rate_value:.6f} rank={r.rank_w}")
    return t, summary, EXIT_OK


def cmd_benchmark(ctx: _Context):
    cfg, s = ctx.cfg, ctx.system
    ctx.require_feasible(cfg.rate_target)
    b = cfg.benchmark
    b1 = expected_crb_exact(ctx.prior, ctx.h, ctx.env, s, cfg.rate_target, b.hermite_order)
    b2 = expected_crb_inexact(ctx.prior, ctx.h, ctx.env, s, cfg.rate_target, b.variance,
                              b.draws, b.seed, n_jobs=cfg.n_jobs)
    opt = solve_p3(ctx.m, ctx.h, ctx.env, s, cfg.rate_target).pcrb_value
    t = Table(["rbar", "pcrb_opt", "crb_expected_bench1", "crb_expected_bench2"],
              ["bit/s/Hz", "rad^2", "rad^2", "rad^2"],
              ctx.meta("benchmark", {"benchmark_seed": b.seed, "draws": b.draws,
                                     "hermite_order": b.hermite_order,
                                     "perturb_variance": b.variance}))
    t.add(cfg.rate_target, opt, b1, b2)
    return t, f"rbar={cfg.rate_target}: pcrb_opt={opt:.4e} bench1={b1:.4e} bench2={b2:.4e}", EXIT_OK


def cmd_montecarlo(ctx: _Context):
    cfg, s = ctx.cfg, ctx.system
    ctx.require_feasible(cfg.rate_target)
    mc = cfg.montecarlo
    design = solve_p3(ctx.m, ctx.h, ctx.env, s, cfg.rate_target).w
    grid = GridSpec(points=mc.grid_points)
    t = Table(["snr_db", "mse", "pcrb", "pcrb_upper", "mse_over_pcrb"],
              ["dB", "rad^2", "rad^2", "rad^2", "-"],
              ctx.meta("montecarlo", {"design": f"optimal at rbar={cfg.rate_target!r}",
                                      "estimator": mc.estimator, "trials": mc.trials,
                                      "montecarlo_seed": mc.seed, "grid_points": mc.grid_points}))
    for snr in mc.snr_grid_db:
        env = cfg.environment(snr)
        batch = monte_carlo_mse(design, mc.estimator, env, ctx.prior, s, mc.trials, mc.seed,
                                grid, n_jobs=cfg.n_jobs)
        bound = pcrb(design, ctx.m, env, s)
        t.add(snr, batch.mse, bound, pcrb_upper(design, ctx.m, env, s), batch.mse / bound)
    i = int(np.argmin(np.abs(np.asarray(mc.snr_grid_db) - cfg.snr_db)))
    row = t.rows[i]
    return t, (f"{mc.estimator} over {mc.trials} trials: mse={row[1]:.4e} "
               f"pcrb={row[2]:.4e} at {row[0]} dB"), EXIT_OK


def _sweep_point(cfg: ExperimentConfig, m, h, value):
    s = cfg.system
    if cfg.sweep.variable == "rate_target":
        rbar, env = value, cfg.environment()
    else:
        rbar, env = cfg.rate_target, cfg.environment(value)
    b = cfg.benchmark
    opt = solve_p3(m, h, env, s, rbar)
    sub = solve_p4(m, h, env, s, rbar)
    b1 = expected_crb_exact(cfg.prior, h, env, s, rbar, b.hermite_order)
    b2 = expected_crb_inexact(cfg.prior, h, env, s, rbar, b.variance, b.draws, b.seed)
    return (value, opt.pcrb_value, sub.pcrb_value, sub.pcrb_upper_value, b1, b2)


def cmd_sweep(ctx: _Context):
    cfg = ctx.cfg
    sw = cfg.sweep
    rbars = sw.grid if sw.variable == "rate_target" else (cfg.rate_target,)
    for rbar in rbars:
        ctx.require_feasible(rbar)
    m = ctx.m
    if cfg.n_jobs == 1:
        rows = [_sweep_point(cfg, m, ctx.h, v) for v in sw.grid]
    else:
        from joblib import Parallel, delayed

        rows = Parallel(n_jobs=cfg.n_jobs)(delayed(_sweep_point)(cfg, m, ctx.h, v) for v in sw.grid)
    first = ("rbar", "bit/s/Hz") if sw.variable == "rate_target" else ("snr_db", "dB")
    t = Table([first[0], "pcrb_opt", "pcrb_sub", "pcrb_upper_sub", "crb_expected_bench1",
               "crb_expected_bench2"], [first[1]] + ["rad^2"] * 5,
              ctx.meta("sweep", {"sweep_variable": sw.variable,
                                 "benchmark_seed": cfg.benchmark.seed,
                                 "benchmark_draws": cfg.benchmark.draws,
                                 "benchmark_variance": cfg.benchmark.variance}))
    for row in rows:
        t.add(*row)
    return t, f"sweep over {len(rows)} {sw.variable} points written", EXIT_OK


COMMANDS = {
    "feasibility": cmd_feasibility,
    "bounds": cmd_bounds,
    "beampattern": cmd_beampattern,
    "solve-optimal": cmd_solve_optimal,
    "solve-suboptimal": cmd_solve_suboptimal,
    "benchmark": cmd_benchmark,
    "montecarlo": cmd_montecarlo,
    "sweep": cmd_sweep,
}


def _apply_overrides(cfg: ExperimentConfig, seed: Optional[int], trials: Optional[int]):
    if seed is not None:
        cfg = cfg.replace(channel=replace(cfg.channel, seed=seed),
                          montecarlo=replace(cfg.montecarlo, seed=seed),
                          benchmark=replace(cfg.benchmark, seed=seed))
    if trials is not None:
        if trials < 1:
            raise ConfigError("--trials must be >= 1")
        cfg = cfg.replace(montecarlo=replace(cfg.montecarlo, trials=trials),
                          benchmark=replace(cfg.benchmark, draws=trials))
    return cfg


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="isac", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="YAML experiment file")
    p.add_argument("--out", help="output table (.csv or .json); stdout when omitted")
    p.add_argument("--seed", type=int, help="override every seed in the config")
    p.add_argument("--trials", type=int, help="override Monte Carlo trials / benchmark draws")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def _write(table: Table, out: Optional[str], fmt: str):
    if out is not None and out.endswith(".json"):
        fmt = "json"
    elif out is not None and out.endswith(".csv"):
        fmt = "csv"
    text = table.to_json() if fmt == "json" else table.to_csv()
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(args.config), args.seed, args.trials)
        ctx = _Context(cfg)
        table, summary, status = COMMANDS[args.command](ctx)
        out = args.out if args.out is not None else cfg.output.path
        _write(table, out, cfg.output.format)
        print(summary, file=sys.stdout if out is not None else sys.stderr)
        return status
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SolverError, QuadratureError, LinAlgError, UnboundedError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
