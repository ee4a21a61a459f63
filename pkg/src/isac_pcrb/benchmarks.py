"""Genie-aided baselines: transmit designs for a known (exact or perturbed)
target angle, scored by the point CRB averaged over the true prior."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import ConfigError
from .fisher import SensingMatrices, crb_point
from .model import (
    ANGLE_DOMAIN,
    GaussianMixture,
    SystemConfig,
    TargetEnvironment,
    steering_rx_deriv,
    steering_tx,
    steering_tx_deriv,
)
from .numerics import hermitian_part
from .suboptimal import solve_p4

__all__ = [
    "BenchmarkSpec",
    "point_mass_matrices",
    "solve_known_angle",
    "expected_crb_exact",
    "expected_crb_inexact",
    "INEXACT_VARIANCE",
]

#: Angle-error variance used for the inexact benchmark in the reference scenario.
INEXACT_VARIANCE = 10 ** -1.5


@dataclass(frozen=True)
class BenchmarkSpec:
    """Which angle the genie design trusts.

    ``mode="exact"`` uses ``theta_known``; ``mode="inexact"`` perturbs it by
    a Gaussian error of variance ``perturb_variance``.
    """

    mode: str = "exact"
    theta_known: float = 0.0
    perturb_variance: float = 0.0

    def __post_init__(self):
        if self.mode not in ("exact", "inexact"):
            raise ConfigError(f"mode must be 'exact' or 'inexact', got {self.mode!r}")
        if self.perturb_variance < 0 or not np.isfinite(self.perturb_variance):
            raise ConfigError("perturb_variance must be finite and >= 0")
        if self.mode == "exact" and self.perturb_variance != 0:
            raise ConfigError("exact mode requires perturb_variance = 0")
        lo, hi = ANGLE_DOMAIN
        if not (lo <= self.theta_known < hi):
            raise ConfigError("theta_known must lie in [-pi/2, pi/2)")


def point_mass_matrices(theta: float, cfg: SystemConfig) -> SensingMatrices:
    """Sensing matrices of a prior concentrated at ``theta`` (no prior information)."""
    a = steering_tx(theta, cfg)
    ad = steering_tx_deriv(theta, cfg)
    bd = steering_rx_deriv(theta, cfg)
    nr = cfg.n_rx
    a1 = hermitian_part(np.vdot(bd, bd).real * np.outer(a, a.conj()))
    a2 = hermitian_part(nr * np.outer(ad, ad.conj()))
    a3 = nr * np.outer(ad, a.conj())
    a4 = hermitian_part(nr * np.outer(a, a.conj()))
    return SensingMatrices(a1, a2, a3, a4, rho=0.0, fp11=0.0)


def _clip_angle(theta):
    lo, hi = ANGLE_DOMAIN
    return float(np.clip(theta, lo, np.nextafter(hi, lo)))


def solve_known_angle(spec: BenchmarkSpec, h: np.ndarray, cfg: SystemConfig,
                      env: TargetEnvironment, rbar: float,
                      rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Covariance minimising the point CRB at the trusted angle.

    In inexact mode the trusted angle is drawn from ``N(theta_known,
    perturb_variance)`` (clipped to the angle domain) using ``rng``.
    """
    theta = spec.theta_known
    if spec.mode == "inexact" and spec.perturb_variance > 0:
        if rng is None:
            raise ConfigError("inexact mode needs a random generator")
        theta = _clip_angle(theta + math.sqrt(spec.perturb_variance) * rng.standard_normal())
    return solve_p4(point_mass_matrices(theta, cfg), h, env, cfg, rbar).w


def _hermite_nodes(prior: GaussianMixture, order: int):
    x, w = np.polynomial.hermite_e.hermegauss(order)
    w = w / math.sqrt(2 * math.pi)
    nodes, weights = [], []
    for p, mu, s in zip(prior.weights, prior.means, prior.stds):
        nodes.append(mu + s * x)
        weights.append(p * w)
    nodes = np.concatenate(nodes)
    weights = np.concatenate(weights)
    lo, hi = ANGLE_DOMAIN
    keep = (nodes >= lo) & (nodes < hi)
    return nodes[keep], weights[keep]


def _map(fn, items, n_jobs):
    if n_jobs is None or n_jobs == 1:
        return [fn(*it) for it in items]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=n_jobs)(delayed(fn)(*it) for it in items)


def expected_crb_exact(prior: GaussianMixture, h: np.ndarray, env: TargetEnvironment,
                       cfg: SystemConfig, rbar: float, order: int = 12,
                       n_jobs: Optional[int] = None) -> float:
    """Exact-angle benchmark: ``E_theta[crb_point(theta, W(theta))]``.

    Each node of a per-component Gauss-Hermite rule needs its own design,
    so the prior average uses ``K * order`` solves.
    """
    nodes, weights = _hermite_nodes(prior, order)

    def one(theta):
        w = solve_known_angle(BenchmarkSpec("exact", float(theta)), h, cfg, env, rbar)
        return crb_point(theta, w, env, cfg)

    vals = _map(one, [(t,) for t in nodes], n_jobs)
    return float(np.dot(weights, vals) / np.sum(weights))


def expected_crb_inexact(prior: GaussianMixture, h: np.ndarray, env: TargetEnvironment,
                         cfg: SystemConfig, rbar: float, variance: float = INEXACT_VARIANCE,
                         draws: int = 200, seed: int = 0,
                         n_jobs: Optional[int] = None) -> float:
    """Perturbed-angle benchmark averaged by Monte Carlo over the true angle
    and the angle error.

    Draw ``i`` uses its own child of ``SeedSequence(seed)`` so the result does
    not depend on ``n_jobs``.
    """
    if draws < 1:
        raise ConfigError("draws must be >= 1")
    children = np.random.SeedSequence(seed).spawn(draws)

    def one(child):
        rng = np.random.default_rng(child)
        theta = prior.sample(rng)
        spec = BenchmarkSpec("inexact", theta, variance)
        w = solve_known_angle(spec, h, cfg, env, rbar, rng)
        return crb_point(theta, w, env, cfg)

    vals = _map(one, [(c,) for c in children], n_jobs)
    return float(np.mean(vals))
