"""Monte Carlo ground truth: signal and echo generation, MAP/MLE angle
estimators with the reflection coefficient profiled out, and empirical MSE."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .exceptions import ConfigError, UnboundedError
from .model import ANGLE_DOMAIN, GaussianMixture, SystemConfig, TargetEnvironment, steering_rx, steering_tx
from .numerics import psd_sqrt

__all__ = [
    "GridSpec",
    "EchoObservation",
    "TrialBatch",
    "gen_signals",
    "gen_echo",
    "profile_alpha",
    "concentrated_loglik",
    "map_estimate",
    "mle_estimate",
    "monte_carlo_mse",
]


@dataclass(frozen=True)
class GridSpec:
    """Uniform search grid over ``[-pi/2, pi/2)`` followed by a bounded
    scalar refinement around the best grid point."""

    points: int = 2048
    refine_tol: float = 1e-5
    refine: bool = True

    def __post_init__(self):
        if self.points < 2:
            raise ConfigError("grid needs at least two points")
        if not self.refine_tol > 0:
            raise ConfigError("refine_tol must be > 0")

    def grid(self) -> np.ndarray:
        lo, hi = ANGLE_DOMAIN
        return lo + (hi - lo) * np.arange(self.points) / self.points


@dataclass(frozen=True)
class EchoObservation:
    """Received block ``y`` (Nr x L), transmitted block ``x`` (Nt x L) and the truth."""

    y: np.ndarray
    x: np.ndarray
    theta: float
    alpha: complex


@dataclass
class TrialBatch:
    trials: int
    seed: int
    mse: float
    estimates: np.ndarray
    truths: np.ndarray = field(repr=False)
    estimator: str = "map"


def gen_signals(w: np.ndarray, symbols: int, rng: np.random.Generator) -> np.ndarray:
    """``Nt x L`` block with i.i.d. ``CN(0, W)`` columns."""
    n = w.shape[0]
    z = (rng.standard_normal((n, symbols)) + 1j * rng.standard_normal((n, symbols))) / math.sqrt(2.0)
    return psd_sqrt(w) @ z


def gen_echo(x: np.ndarray, theta: float, env: TargetEnvironment, cfg: SystemConfig,
             rng: np.random.Generator) -> EchoObservation:
    """``Y = alpha b(theta) a(theta)^H X + N`` with ``CN(0, sigma_s^2)`` noise."""
    a = steering_tx(theta, cfg)
    b = steering_rx(theta, cfg)
    shape = (cfg.n_rx, x.shape[1])
    noise = math.sqrt(cfg.noise_sense_w / 2.0) * (rng.standard_normal(shape)
                                                  + 1j * rng.standard_normal(shape))
    y = env.alpha * np.outer(b, a.conj() @ x) + noise
    return EchoObservation(y=y, x=x, theta=float(theta), alpha=env.alpha)


def profile_alpha(y: np.ndarray, x: np.ndarray, theta: float, cfg: SystemConfig) -> complex:
    """Least-squares reflection coefficient for a fixed angle."""
    a = steering_tx(theta, cfg)
    b = steering_rx(theta, cfg)
    xa = x.conj().T @ a
    den = np.vdot(b, b).real * np.vdot(xa, xa).real
    if den <= 0:
        raise UnboundedError("no transmitted energy towards theta: alpha is not identifiable")
    return complex(np.vdot(b, y @ xa) / den)


def concentrated_loglik(theta, y: np.ndarray, x: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Log-likelihood with alpha profiled out, up to a theta-independent constant.

    Angles with no transmitted energy get zero (the value for ``alpha = 0``).
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    a = steering_tx(theta, cfg)
    b = steering_rx(theta, cfg)
    xa = a.conj() @ x                     # rows: a(theta)^H X
    num = np.abs(np.einsum("gi,gi->g", b.conj(), (y @ xa.conj().T).T)) ** 2
    den = cfg.n_rx * np.sum(np.abs(xa) ** 2, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, num / (cfg.noise_sense_w * den), 0.0)
    return out


def _search(objective, grid_spec: GridSpec) -> float:
    grid = grid_spec.grid()
    vals = objective(grid)
    k = int(np.argmax(vals))              # first maximiser: ties go to the smallest angle
    best, best_val = float(grid[k]), float(vals[k])
    if not grid_spec.refine:
        return best
    lo, hi = ANGLE_DOMAIN
    step = grid[1] - grid[0]
    left = max(lo, best - step)
    right = min(np.nextafter(hi, lo), best + step)
    res = minimize_scalar(lambda t: -float(objective(np.array([t]))[0]), bounds=(left, right),
                          method="bounded", options={"xatol": grid_spec.refine_tol})
    if res.success and -res.fun > best_val:
        best = float(np.clip(res.x, lo, np.nextafter(hi, lo)))
    return best


def map_estimate(obs: EchoObservation, prior: GaussianMixture, cfg: SystemConfig,
                 grid_spec: GridSpec = GridSpec()) -> float:
    """Maximum a posteriori angle with alpha profiled out."""
    return _search(lambda t: concentrated_loglik(t, obs.y, obs.x, cfg) + prior.logpdf(t),
                   grid_spec)


def mle_estimate(obs: EchoObservation, cfg: SystemConfig,
                 grid_spec: GridSpec = GridSpec()) -> float:
    """Maximum likelihood angle; a flat likelihood returns the lowest grid angle."""
    return _search(lambda t: concentrated_loglik(t, obs.y, obs.x, cfg), grid_spec)


def _trial(child, w, estimator, env, prior, cfg, grid_spec):
    rng = np.random.default_rng(child)
    theta = prior.sample(rng)
    x = gen_signals(w, cfg.symbols, rng)
    obs = gen_echo(x, theta, env, cfg, rng)
    if estimator == "map":
        est = map_estimate(obs, prior, cfg, grid_spec)
    else:
        est = mle_estimate(obs, cfg, grid_spec)
    return theta, est


def monte_carlo_mse(design: np.ndarray, estimator: str, env: TargetEnvironment,
                    prior: GaussianMixture, cfg: SystemConfig, trials: int, seed: int,
                    grid_spec: GridSpec = GridSpec(), n_jobs: Optional[int] = None) -> TrialBatch:
    """Empirical angle MSE of ``estimator`` (``"map"`` or ``"mle"``) for a fixed design.

    Each trial draws the angle from the prior, a fresh signal block and
    noise from its own child of ``SeedSequence(seed)``; results do not
    depend on ``n_jobs``.
    """
    if estimator not in ("map", "mle"):
        raise ConfigError(f"estimator must be 'map' or 'mle', got {estimator!r}")
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    children = np.random.SeedSequence(seed).spawn(trials)
    args = (design, estimator, env, prior, cfg, grid_spec)
    if n_jobs is None or n_jobs == 1:
        out = [_trial(c, *args) for c in children]
    else:
        from joblib import Parallel, delayed

        out = Parallel(n_jobs=n_jobs)(delayed(_trial)(c, *args) for c in children)
    truths = np.array([o[0] for o in out])
    est = np.array([o[1] for o in out])
    mse = float(np.mean((est - truths) ** 2))
    return TrialBatch(trials=trials, seed=seed, mse=mse, estimates=est, truths=truths,
                      estimator=estimator)
