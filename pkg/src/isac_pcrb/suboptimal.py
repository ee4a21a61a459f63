"""Semi-closed-form minimiser of the PCRB upper bound.

The upper bound only depends on ``tr(A1 W)``, so the problem is
``max tr(A1 W)`` subject to the rate and power constraints.  Its Lagrange
dual is minimised over ``(beta, mu)`` with the ellipsoid method; for fixed
multipliers the inner maximiser is a whitened water-filling solution.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .exceptions import ConfigError, InfeasibleError, LinAlgError, SolverError
from .fisher import SensingMatrices, pcrb, pcrb_upper, rate, trace_product
from .model import SystemConfig, TargetEnvironment
from .numerics import hermitian_evd, hermitian_part, psd_inv_sqrt, reduced_svd
from .optimal import capacity_waterfilling, check_feasibility, rank_diagnostics

__all__ = [
    "DualPoint",
    "SolveResult",
    "EllipsoidOptions",
    "sensing_only_upper",
    "build_q",
    "inner_solution",
    "dual_objective",
    "solve_p4",
    "solve_p4_miso",
]

logger = logging.getLogger(__name__)
LN2 = math.log(2.0)
_MU_SHIFT = 1e-9


@dataclass(frozen=True)
class DualPoint:
    """Rate multiplier ``beta`` and power multiplier ``mu``."""

    beta: float
    mu: float

    def __post_init__(self):
        if not (self.beta > 0 and np.isfinite(self.beta)):
            raise ConfigError(f"beta must be finite and > 0, got {self.beta!r}")
        if not np.isfinite(self.mu):
            raise ConfigError("mu must be finite")


@dataclass
class SolveResult:
    """Covariance returned by the suboptimal and benchmark solvers.

    ``branch`` is one of ``"sensing-only"``, ``"dual"`` or ``"capacity"``.
    ``duality_gap`` is ``g(beta, mu) - tr(A1 W)`` at the returned
    multipliers, relative to ``tr(A1 W)``.
    """

    w: np.ndarray
    rate_value: float
    pcrb_value: float
    pcrb_upper_value: float
    dual: Optional[DualPoint]
    rank_w: int
    eigenvalues: np.ndarray
    iterations: int
    duality_gap: float
    branch: str
    residuals: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EllipsoidOptions:
    radius_tol: float = 1e-7
    slack_tol: float = 1e-5
    max_iter: int = 2000
    polish: bool = True


class _Whitener:
    """Caches the EVD of ``A1`` so ``Q^{-1/2}`` is a diagonal rescaling."""

    def __init__(self, a1: np.ndarray):
        vals, vecs = hermitian_evd(a1)
        self.a1 = a1
        self.vals = vals
        self.vecs = vecs
        self.lam1 = max(float(vals[0]), 0.0)

    def inv_sqrt(self, dual: DualPoint) -> np.ndarray:
        gaps = dual.mu - self.vals
        if np.any(gaps <= 0):
            raise LinAlgError(f"mu={dual.mu!r} does not exceed the largest eigenvalue of A1")
        return (self.vecs * np.sqrt(dual.beta / gaps)) @ self.vecs.conj().T


def sensing_only_upper(m: SensingMatrices, power: float) -> np.ndarray:
    """``P s1 s1^H`` with ``s1`` the principal eigenvector of ``A1``."""
    vals, vecs = hermitian_evd(m.a1)
    if vals[0] <= 0:
        raise LinAlgError("A1 is zero: no direction carries angle information")
    s1 = vecs[:, 0]
    return power * np.outer(s1, s1.conj())


def build_q(dual: DualPoint, m: SensingMatrices) -> np.ndarray:
    """``Q = (mu I - A1) / beta``; positive definite when ``mu`` exceeds ``lambda_1(A1)``."""
    lam1 = float(np.linalg.eigvalsh(hermitian_part(m.a1))[-1])
    if dual.mu <= lam1:
        raise LinAlgError(f"mu={dual.mu!r} must exceed lambda_1(A1)={lam1!r}")
    return hermitian_part((dual.mu * np.eye(m.n_tx) - m.a1) / dual.beta)


def _inner(q_is: np.ndarray, h: np.ndarray, noise: float) -> np.ndarray:
    g = (h / math.sqrt(noise)) @ q_is
    _, s, v = reduced_svd(g)
    with np.errstate(divide="ignore"):
        levels = np.clip(1.0 / LN2 - np.where(s > 0, 1.0 / (s * s), np.inf), 0.0, None)
    core = (v * levels) @ v.conj().T
    return hermitian_part(q_is @ core @ q_is)


def inner_solution(dual: DualPoint, m: SensingMatrices, h: np.ndarray, noise: float) -> np.ndarray:
    """Maximiser of the Lagrangian for fixed multipliers."""
    q_is = psd_inv_sqrt(build_q(dual, m))
    return _inner(q_is, np.atleast_2d(h), noise)


def dual_objective(dual: DualPoint, m: SensingMatrices, h: np.ndarray, cfg: SystemConfig,
                   rbar: float, w: Optional[np.ndarray] = None) -> float:
    """``g(beta, mu) = max_W tr(A1 W) + beta (rate - rbar) + mu (P - tr W)``."""
    if w is None:
        w = inner_solution(dual, m, h, cfg.noise_comm_w)
    return float(trace_product(m.a1, w).real
                 + dual.beta * (rate(w, h, cfg.noise_comm_w) - rbar)
                 + dual.mu * (cfg.power_w - np.trace(w).real))


def _result(w, m, h, env, cfg, dual, iterations, gap, branch, residuals=None):
    rank_w, vals = rank_diagnostics(w)
    return SolveResult(
        w=w, rate_value=rate(w, h, cfg.noise_comm_w), pcrb_value=pcrb(w, m, env, cfg),
        pcrb_upper_value=pcrb_upper(w, m, env, cfg), dual=dual, rank_w=rank_w,
        eigenvalues=vals, iterations=iterations, duality_gap=gap, branch=branch,
        residuals=residuals or {})


def _ellipsoid(wh: _Whitener, h, cfg, rbar, opts: EllipsoidOptions):
    """Ellipsoid method on normalised multipliers ``(beta/(lam1 P), mu/lam1)``."""
    lam1, power, noise = wh.lam1, cfg.power_w, cfg.noise_comm_w
    b_scale = lam1 * power
    floor = 1.0 + _MU_SHIFT
    c = np.array([1.0, 2.0 + 1.0 / lam1])
    p_mat = np.diag([1e6, 1e6]) ** 2
    best = None
    it = 0
    for it in range(1, opts.max_iter + 1):
        if c[0] <= 0:
            g = np.array([-1.0, 0.0])
        elif c[1] <= floor:
            g = np.array([0.0, -1.0])
        else:
            dual = DualPoint(c[0] * b_scale, c[1] * lam1)
            w = _inner(wh.inv_sqrt(dual), h, noise)
            r_slack = rate(w, h, noise) - rbar
            p_slack = power - np.trace(w).real
            val = float(trace_product(wh.a1, w).real
                        + dual.beta * r_slack + dual.mu * p_slack)
            if best is None or val < best[0]:
                best = (val, dual, w)
            if abs(r_slack) <= opts.slack_tol and abs(p_slack) <= opts.slack_tol * power:
                break
            g = np.array([b_scale * r_slack, lam1 * p_slack])
        pg = p_mat @ g
        denom = math.sqrt(max(float(g @ pg), 0.0))
        if denom == 0.0:
            break
        gt = pg / denom
        c = c - gt / 3.0
        p_mat = (4.0 / 3.0) * (p_mat - (2.0 / 3.0) * np.outer(gt, gt))
        if math.sqrt(np.max(np.linalg.eigvalsh(p_mat))) <= opts.radius_tol:
            break
    if best is None:
        raise SolverError("ellipsoid method never visited a valid dual point")
    return best, it


def _power_matched(wh: _Whitener, h, cfg, beta):
    """Solve ``tr W(beta, mu) = P`` for ``mu``; ``tr W`` decreases in ``mu``."""
    lam1, power, noise = wh.lam1, cfg.power_w, cfg.noise_comm_w
    lo = lam1 * (1.0 + _MU_SHIFT) + 1e-300

    def excess(mu):
        return np.trace(_inner(wh.inv_sqrt(DualPoint(beta, mu)), h, noise)).real - power

    if excess(lo) <= 0:
        # the whitened channel cannot absorb the budget even next to lambda_1
        return lo
    hi = max(2.0 * lam1, lo * 2.0, 1e-12)
    while excess(hi) > 0:
        hi *= 2.0
        if hi > 1e300:
            raise SolverError("power multiplier bracket diverged")
    return brentq(excess, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def _polish(wh: _Whitener, h, cfg, rbar, beta0):
    """Make both constraints tight: ``tr W = P`` for each beta, then ``rate = rbar``."""
    noise = cfg.noise_comm_w
    cache = {}

    def evaluate(log_beta):
        beta = math.exp(log_beta)
        mu = _power_matched(wh, h, cfg, beta)
        w = _inner(wh.inv_sqrt(DualPoint(beta, mu)), h, noise)
        cache[log_beta] = (DualPoint(beta, mu), w)
        return rate(w, h, noise) - rbar

    lo = hi = math.log(beta0)
    step = math.log(2.0)
    while evaluate(lo) > 0:
        lo -= step
        step *= 2
        if lo < -700:
            raise SolverError("rate multiplier lower bracket diverged")
    step = math.log(2.0)
    while evaluate(hi) < 0:
        hi += step
        step *= 2
        if hi > 700:
            raise SolverError("rate multiplier upper bracket diverged")
    if lo == hi:
        return cache[hi]
    root = brentq(evaluate, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    # step towards the feasible side if the root landed a rounding error short
    for k in range(8):
        if evaluate(root) >= 0:
            break
        root += 1e-14 * 4 ** k * max(1.0, abs(root))
    return cache[root]


def solve_p4(m: SensingMatrices, h: np.ndarray, env: TargetEnvironment, cfg: SystemConfig,
             rbar: float, options: EllipsoidOptions = EllipsoidOptions()) -> SolveResult:
    """Minimise the PCRB upper bound under rate and power constraints.

    Returns the sensing-only beam when it already meets the rate target, the
    capacity-achieving covariance when ``rbar`` equals the capacity, and
    otherwise the inner solution at the optimal multipliers.

    Raises
    ------
    InfeasibleError
        If ``rbar`` exceeds the channel capacity.
    SolverError
        If the multiplier search fails to bracket or converge.
    """
    h = np.atleast_2d(np.asarray(h, dtype=complex))
    noise, power = cfg.noise_comm_w, cfg.power_w
    r_max, w_c = capacity_waterfilling(h, power, noise)
    if not check_feasibility(rbar, r_max):
        raise InfeasibleError(f"rate target {rbar} exceeds capacity {r_max:.6f}",
                              r_max=r_max, rbar=rbar)
    w_s = sensing_only_upper(m, power)
    if rate(w_s, h, noise) >= rbar:
        return _result(w_s, m, h, env, cfg, None, 0, 0.0, "sensing-only")
    if rbar >= r_max - 1e-9 * max(1.0, r_max):
        return _result(w_c, m, h, env, cfg, None, 0, math.nan, "capacity")

    wh = _Whitener(m.a1)
    (_, dual, w), iters = _ellipsoid(wh, h, cfg, rbar, options)
    if options.polish:
        dual, w = _polish(wh, h, cfg, rbar, dual.beta)
    tr_w = np.trace(w).real
    if tr_w < power:
        # scaling up raises both tr(A1 W) and the rate
        w = w * (power / tr_w)
    w = hermitian_part(w)
    primal = float(trace_product(m.a1, w).real)
    g = dual_objective(dual, m, h, cfg, rbar, w=_inner(wh.inv_sqrt(dual), h, noise))
    gap = (g - primal) / max(abs(primal), 1e-300)
    residuals = {"rate_slack": rate(w, h, noise) - rbar, "power_slack": power - np.trace(w).real}
    return _result(w, m, h, env, cfg, dual, iters, gap, "dual", residuals)


def solve_p4_miso(m: SensingMatrices, h_vec: np.ndarray, cfg: SystemConfig,
                  rbar: float) -> np.ndarray:
    """Single-antenna-user special case: a rank-one covariance.

    The beam is the principal eigenvector of ``A1 + eta g g^H`` with
    ``g = h^H``; ``eta`` is found by bisection so the rate constraint holds
    with equality.
    """
    h = np.asarray(h_vec, dtype=complex).reshape(1, -1)
    noise, power = cfg.noise_comm_w, cfg.power_w
    r_max, w_c = capacity_waterfilling(h, power, noise)
    if not check_feasibility(rbar, r_max):
        raise InfeasibleError(f"rate target {rbar} exceeds capacity {r_max:.6f}",
                              r_max=r_max, rbar=rbar)
    w_s = sensing_only_upper(m, power)
    if rate(w_s, h, noise) >= rbar:
        return w_s
    if rbar >= r_max - 1e-9 * max(1.0, r_max):
        return w_c
    g = h.conj().T[:, 0]
    gg = np.outer(g, g.conj())
    scale = max(float(np.linalg.eigvalsh(hermitian_part(m.a1))[-1]), 1e-300) / np.vdot(g, g).real

    def beam(eta):
        _, vecs = hermitian_evd(hermitian_part(m.a1 + eta * scale * gg))
        s = vecs[:, 0]
        return power * np.outer(s, s.conj())

    def short(log_eta):
        return rate(beam(math.exp(log_eta)), h, noise) - rbar

    lo, hi = -30.0, 0.0
    while short(lo) > 0:
        lo -= 30.0
        if lo < -700:
            return beam(0.0)
    while short(hi) < 0:
        hi += 5.0
        if hi > 700:
            raise SolverError("MISO weight bracket diverged")
    root = brentq(short, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    if short(root) < 0:
        root = root + 1e-12 * max(1.0, abs(root))
    return beam(math.exp(root))
