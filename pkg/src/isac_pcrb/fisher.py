"""Fisher information, posterior CRB, its upper bound, point/expected CRB,
achievable rate and beampattern."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import QuadratureError, UnboundedError
from .model import (
    ANGLE_DOMAIN,
    GaussianMixture,
    SystemConfig,
    TargetEnvironment,
    steering_rx_deriv,
    steering_tx,
    steering_tx_deriv,
)
from .numerics import QuadratureSpec, hermitian_part, integrate_matrix, integrate_scalar

__all__ = [
    "SensingMatrices",
    "compute_sensing_matrices",
    "prior_fisher",
    "trace_product",
    "sensing_traces",
    "schur_objective",
    "observation_fim",
    "pcrb",
    "pcrb_upper",
    "crb_point",
    "crb_expected",
    "rate",
    "beampattern",
]


@dataclass(frozen=True)
class SensingMatrices:
    """Prior-averaged steering outer products and the prior Fisher information.

    ``a1``..``a4`` are ``n_tx x n_tx``; ``rho`` is the mixture cross term so
    that ``fp11 = sum_k p_k / sigma_k^2 - rho``.
    """

    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray
    a4: np.ndarray
    rho: float
    fp11: float

    @property
    def n_tx(self) -> int:
        return self.a1.shape[0]


def trace_product(a: np.ndarray, w: np.ndarray) -> complex:
    """``tr(A W)`` without forming the product."""
    return np.sum(a * w.T)


def _prior_integrand(prior: GaussianMixture, theta: np.ndarray) -> np.ndarray:
    # 0.5 * sum_{k1,k2} e_k1 e_k2 (d_k1 - d_k2)^2 / sum_k e_k, scaled back by the max term
    lc = prior.component_logpdf(theta)
    top = np.max(lc, axis=-1, keepdims=True)
    e = np.exp(lc - top)
    d = (theta[:, None] - np.asarray(prior.means)) / np.asarray(prior.variances)
    diff = d[:, :, None] - d[:, None, :]
    num = 0.5 * np.einsum("ni,nj,nij->n", e, e, diff * diff)
    return np.exp(top[:, 0]) * num / np.sum(e, axis=-1)


def prior_fisher(prior: GaussianMixture, quad: QuadratureSpec = QuadratureSpec()):
    """Return ``(fp11, rho)`` for a Gaussian-mixture angle prior."""
    info = float(np.sum(np.asarray(prior.weights) / np.asarray(prior.variances)))
    if prior.n_components == 1:
        return info, 0.0
    rho = integrate_scalar(lambda t: _prior_integrand(prior, t), ANGLE_DOMAIN, quad,
                           prior.breakpoints())
    return info - rho, rho


def compute_sensing_matrices(prior: GaussianMixture, cfg: SystemConfig,
                             quad: QuadratureSpec = QuadratureSpec()) -> SensingMatrices:
    """Integrate the four steering outer-product matrices against the prior."""
    bp = prior.breakpoints()
    n_rx = cfg.n_rx

    def a1(t):
        a = steering_tx(t, cfg)
        bd = steering_rx_deriv(t, cfg)
        weight = np.sum(np.abs(bd) ** 2, axis=-1) * prior.pdf(t)
        return weight[:, None, None] * a[:, :, None] * a.conj()[:, None, :]

    def a2(t):
        ad = steering_tx_deriv(t, cfg)
        return n_rx * prior.pdf(t)[:, None, None] * ad[:, :, None] * ad.conj()[:, None, :]

    def a3(t):
        a = steering_tx(t, cfg)
        ad = steering_tx_deriv(t, cfg)
        return n_rx * prior.pdf(t)[:, None, None] * ad[:, :, None] * a.conj()[:, None, :]

    def a4(t):
        a = steering_tx(t, cfg)
        return n_rx * prior.pdf(t)[:, None, None] * a[:, :, None] * a.conj()[:, None, :]

    mats = [integrate_matrix(f, ANGLE_DOMAIN, quad, bp) for f in (a1, a2, a3, a4)]
    for i in (0, 1, 3):
        mats[i] = hermitian_part(mats[i])
    fp11, rho = prior_fisher(prior, quad)
    return SensingMatrices(*mats, rho=rho, fp11=fp11)


def sensing_traces(w: np.ndarray, m: SensingMatrices):
    """``(tr(A1 W), tr(A2 W), tr(A3 W), tr(A4 W))``; the first, second and fourth are real."""
    return (trace_product(m.a1, w).real, trace_product(m.a2, w).real,
            trace_product(m.a3, w), trace_product(m.a4, w).real)


def schur_objective(w: np.ndarray, m: SensingMatrices) -> float:
    """``tr((A1+A2)W) - |tr(A3 W)|^2 / tr(A4 W)``; zero for ``W = 0``."""
    t1, t2, t3, t4 = sensing_traces(w, m)
    if t4 <= 0:
        return 0.0
    return t1 + t2 - abs(t3) ** 2 / t4


def observation_fim(w: np.ndarray, m: SensingMatrices, env: TargetEnvironment,
                    cfg: SystemConfig) -> np.ndarray:
    """Real 3x3 observation FIM over ``(theta, alpha_R, alpha_I)``.

    The cross terms are ``c * Re(conj(alpha) tr(A3 W)) `` and
    ``c * Re(j conj(alpha) tr(A3 W))`` with ``c = 2 L / sigma_s^2``; their
    Schur complement reproduces the ``|tr(A3 W)|^2`` term of the PCRB.
    """
    t1, t2, t3, t4 = sensing_traces(w, m)
    c = 2.0 * cfg.symbols / cfg.noise_sense_w
    alpha = env.alpha
    cross = alpha.conjugate() * t3
    f = np.empty((3, 3))
    f[0, 0] = c * abs(alpha) ** 2 * (t1 + t2)
    f[0, 1] = f[1, 0] = c * cross.real
    f[0, 2] = f[2, 0] = c * (1j * cross).real
    f[1, 1] = f[2, 2] = c * t4
    f[1, 2] = f[2, 1] = 0.0
    return f


def _bound(prior_term: float, obs_term: float) -> float:
    total = prior_term + obs_term
    if total <= 0:
        raise UnboundedError("no Fisher information about the angle: the bound is infinite")
    return 1.0 / total


def pcrb(w: np.ndarray, m: SensingMatrices, env: TargetEnvironment, cfg: SystemConfig) -> float:
    """Posterior CRB on the azimuth angle for transmit covariance ``w``.

    ``W = 0`` is treated as the no-observation limit and returns ``1/fp11``.
    """
    return _bound(m.fp11, env.info_scale(cfg) * schur_objective(w, m))


def pcrb_upper(w: np.ndarray, m: SensingMatrices, env: TargetEnvironment,
               cfg: SystemConfig) -> float:
    """Upper bound on :func:`pcrb` that keeps only the ``tr(A1 W)`` term."""
    return _bound(m.fp11, env.info_scale(cfg) * trace_product(m.a1, w).real)


def _radiated(theta, w, cfg):
    a = steering_tx(theta, cfg)
    return np.real(np.einsum("...i,ij,...j->...", a.conj(), w, a))


def crb_point(theta, w: np.ndarray, env: TargetEnvironment, cfg: SystemConfig):
    """Deterministic-angle CRB at ``theta`` (scalar or array)."""
    bd = steering_rx_deriv(theta, cfg)
    gain = np.sum(np.abs(bd) ** 2, axis=-1) * _radiated(theta, w, cfg)
    if np.any(gain <= 0):
        raise UnboundedError("no radiated power or zero array derivative towards theta")
    out = 1.0 / (env.info_scale(cfg) * gain)
    return float(out) if np.ndim(out) == 0 else out


def crb_expected(w: np.ndarray, prior: GaussianMixture, env: TargetEnvironment,
                 cfg: SystemConfig, quad: QuadratureSpec = QuadratureSpec()) -> float:
    """Point CRB averaged over the prior.

    Raises
    ------
    QuadratureError
        When the integrand is singular (no power towards likely angles).
    """
    scale = env.info_scale(cfg)

    def f(t):
        bd = steering_rx_deriv(t, cfg)
        gain = np.sum(np.abs(bd) ** 2, axis=-1) * _radiated(t, w, cfg)
        p = prior.pdf(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.where(p > 0, p / (scale * gain), 0.0)
        if not np.all(np.isfinite(vals)):
            raise QuadratureError("expected-CRB integrand is singular on the prior support")
        return vals

    return integrate_scalar(f, ANGLE_DOMAIN, quad, prior.breakpoints())


def rate(w: np.ndarray, h: np.ndarray, noise: float) -> float:
    """Achievable rate ``log2 det(I + H W H^H / noise)`` in bit/s/Hz."""
    hn = np.asarray(h) / math.sqrt(noise)
    g = hermitian_part(hn @ w @ hn.conj().T)
    eig = np.clip(np.linalg.eigvalsh(g), -0.999999, None)
    return float(np.sum(np.log1p(eig)) / math.log(2.0))


def beampattern(w: np.ndarray, theta_grid, cfg: SystemConfig) -> np.ndarray:
    """Radiated power ``a(theta)^H W a(theta)`` over a grid of angles."""
    return np.atleast_1d(_radiated(np.asarray(theta_grid, dtype=float), w, cfg))
