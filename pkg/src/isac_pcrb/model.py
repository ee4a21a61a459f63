"""Physical model: ULA steering vectors, geometry, the angle prior and channels.

All angles are radians.  Powers and noise levels are linear watts; dB
conversions only happen when a configuration file is parsed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .exceptions import ConfigError

__all__ = [
    "ANGLE_DOMAIN",
    "SystemConfig",
    "GaussianMixture",
    "TargetEnvironment",
    "UserGeometry",
    "ula_response",
    "ula_response_deriv",
    "steering_tx",
    "steering_rx",
    "steering_tx_deriv",
    "steering_rx_deriv",
    "gm_pdf",
    "gm_logpdf",
    "gm_sample",
    "rician_channel",
]

ANGLE_DOMAIN = (-math.pi / 2, math.pi / 2)


@dataclass(frozen=True)
class SystemConfig:
    """Array sizes, power budgets and target geometry of the ISAC base station."""

    n_tx: int = 10
    n_rx: int = 12
    n_user: int = 8
    symbols: int = 25
    power_w: float = 1.0
    noise_comm_w: float = 1e-12
    noise_sense_w: float = 1e-12
    spacing_over_lambda: float = 0.5
    bs_height_m: float = 10.0
    target_range_m: float = 50.0

    def __post_init__(self):
        for name in ("n_tx", "n_rx", "n_user", "symbols"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        for name in ("power_w", "noise_comm_w", "noise_sense_w", "spacing_over_lambda",
                     "target_range_m"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be finite and > 0, got {value!r}")
        if self.bs_height_m < 0:
            raise ConfigError("bs_height_m must be >= 0")
        if self.bs_height_m > self.target_range_m:
            raise ConfigError(
                f"bs_height_m={self.bs_height_m} exceeds target_range_m={self.target_range_m}")

    @property
    def cos_phi(self) -> float:
        """Cosine of the (known) target elevation angle."""
        r, h = self.target_range_m, self.bs_height_m
        return math.sqrt(r * r - h * h) / r

    def replace(self, **changes) -> "SystemConfig":
        from dataclasses import replace

        return replace(self, **changes)


def ula_response(theta, n: int, spacing: float, cos_phi: float) -> np.ndarray:
    """Steering vector(s) of an ``n``-element ULA centred on the array origin.

    ``theta`` may be a scalar or an array; the element index runs along the
    last axis of the result.
    """
    theta = np.asarray(theta, dtype=float)
    idx = n - 2.0 * np.arange(1, n + 1) + 1.0
    phase = -np.pi * spacing * cos_phi * np.multiply.outer(np.sin(theta), idx)
    return np.exp(1j * phase)


def ula_response_deriv(theta, n: int, spacing: float, cos_phi: float) -> np.ndarray:
    """Derivative of :func:`ula_response` with respect to ``theta``."""
    theta = np.asarray(theta, dtype=float)
    idx = n - 2.0 * np.arange(1, n + 1) + 1.0
    factor = -1j * np.pi * spacing * cos_phi * np.multiply.outer(np.cos(theta), idx)
    return factor * ula_response(theta, n, spacing, cos_phi)


def steering_tx(theta, cfg: SystemConfig) -> np.ndarray:
    return ula_response(theta, cfg.n_tx, cfg.spacing_over_lambda, cfg.cos_phi)


def steering_rx(theta, cfg: SystemConfig) -> np.ndarray:
    return ula_response(theta, cfg.n_rx, cfg.spacing_over_lambda, cfg.cos_phi)


def steering_tx_deriv(theta, cfg: SystemConfig) -> np.ndarray:
    return ula_response_deriv(theta, cfg.n_tx, cfg.spacing_over_lambda, cfg.cos_phi)


def steering_rx_deriv(theta, cfg: SystemConfig) -> np.ndarray:
    return ula_response_deriv(theta, cfg.n_rx, cfg.spacing_over_lambda, cfg.cos_phi)


def rx_deriv_norm_sq(theta, cfg: SystemConfig):
    """Closed form of ``||b'(theta)||^2``; avoids building the vectors."""
    n = cfg.n_rx
    c = np.pi * cfg.spacing_over_lambda * cfg.cos_phi
    return c * c * (n * (n * n - 1) / 3.0) * np.cos(theta) ** 2


@dataclass(frozen=True)
class GaussianMixture:
    """K-component Gaussian mixture prior on the target azimuth angle.

    Weights must already sum to one; the mixture is never renormalised
    silently.
    """

    weights: tuple
    means: tuple
    variances: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        m = np.asarray(self.means, dtype=float).ravel()
        v = np.asarray(self.variances, dtype=float).ravel()
        if not (w.size == m.size == v.size) or w.size == 0:
            raise ConfigError("weights, means and variances must be non-empty and equal length")
        if np.any(w < 0) or np.any(w > 1):
            raise ConfigError("mixture weights must lie in [0, 1]")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ConfigError(f"mixture weights sum to {w.sum()!r}, expected 1")
        if np.any(~np.isfinite(v)) or np.any(v <= 0):
            raise ConfigError("mixture variances must be strictly positive")
        lo, hi = ANGLE_DOMAIN
        if np.any(m < lo) or np.any(m >= hi):
            raise ConfigError("mixture means must lie in [-pi/2, pi/2)")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))
        object.__setattr__(self, "means", tuple(float(x) for x in m))
        object.__setattr__(self, "variances", tuple(float(x) for x in v))

    @classmethod
    def single(cls, mean: float, variance: float) -> "GaussianMixture":
        return cls((1.0,), (mean,), (variance,))

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def stds(self) -> np.ndarray:
        return np.sqrt(np.asarray(self.variances))

    def component_logpdf(self, theta) -> np.ndarray:
        """``log(p_k f_k(theta))`` with the component index on the last axis."""
        theta = np.asarray(theta, dtype=float)[..., None]
        w = np.asarray(self.weights)
        m = np.asarray(self.means)
        v = np.asarray(self.variances)
        with np.errstate(divide="ignore"):
            logw = np.log(w)
        return logw - 0.5 * np.log(2 * np.pi * v) - (theta - m) ** 2 / (2 * v)

    def logpdf(self, theta) -> np.ndarray:
        return logsumexp(self.component_logpdf(theta), axis=-1)

    def pdf(self, theta) -> np.ndarray:
        return np.exp(self.logpdf(theta))

    def modes(self) -> np.ndarray:
        """Component means ordered by decreasing density value at the mean."""
        m = np.asarray(self.means)
        return m[np.argsort(-self.pdf(m), kind="stable")]

    def breakpoints(self, widths: Sequence[float] = (0.0, 1.0, 2.0, 4.0, 8.0)) -> np.ndarray:
        """Angles where prior-weighted integrands change scale.

        Used to anchor quadrature panels so narrow components are resolved.
        """
        pts = []
        for mu, s in zip(self.means, self.stds):
            for k in widths:
                pts.extend((mu - k * s, mu + k * s))
        return np.unique(np.asarray(pts))

    def sample(self, rng: np.random.Generator, size: Optional[int] = None):
        return gm_sample(self, rng, size)


def gm_pdf(theta, prior: GaussianMixture):
    return prior.pdf(theta)


def gm_logpdf(theta, prior: GaussianMixture):
    return prior.logpdf(theta)


def gm_sample(prior: GaussianMixture, rng: np.random.Generator, size: Optional[int] = None):
    """Draw angles from the mixture, rejection-resampling outside ``[-pi/2, pi/2)``."""
    n = 1 if size is None else int(size)
    out = np.empty(n)
    lo, hi = ANGLE_DOMAIN
    w = np.asarray(prior.weights)
    m = np.asarray(prior.means)
    s = prior.stds
    todo = np.arange(n)
    while todo.size:
        comp = rng.choice(w.size, size=todo.size, p=w)
        draw = m[comp] + s[comp] * rng.standard_normal(todo.size)
        ok = (draw >= lo) & (draw < hi)
        out[todo[ok]] = draw[ok]
        todo = todo[~ok]
    return float(out[0]) if size is None else out


@dataclass(frozen=True)
class TargetEnvironment:
    """Complex round-trip reflection coefficient of the target."""

    alpha: complex

    def __post_init__(self):
        a = complex(self.alpha)
        if not np.isfinite(a) or abs(a) == 0:
            raise ConfigError("alpha must be finite and non-zero")
        object.__setattr__(self, "alpha", a)

    @classmethod
    def from_snr_db(cls, snr_db: float, cfg: SystemConfig, phase: float = 0.0):
        """Invert the normalised echo SNR ``P |alpha|^2 L / sigma_s^2`` (in dB)."""
        snr = 10.0 ** (snr_db / 10.0)
        mag = math.sqrt(snr * cfg.noise_sense_w / (cfg.power_w * cfg.symbols))
        return cls(mag * complex(math.cos(phase), math.sin(phase)))

    def snr(self, cfg: SystemConfig) -> float:
        return cfg.power_w * abs(self.alpha) ** 2 * cfg.symbols / cfg.noise_sense_w

    def snr_db(self, cfg: SystemConfig) -> float:
        return 10.0 * math.log10(self.snr(cfg))

    def info_scale(self, cfg: SystemConfig) -> float:
        """``2 |alpha|^2 L / sigma_s^2``, the factor in front of every trace term."""
        return 2.0 * abs(self.alpha) ** 2 * cfg.symbols / cfg.noise_sense_w


@dataclass(frozen=True)
class UserGeometry:
    """Rician BS-user channel parameters (linear units)."""

    rician_factor: float = 10 ** (-8 / 10)
    ref_loss: float = 10 ** (-30 / 10)
    exponent: float = 3.5
    range_m: float = 400.0
    height_m: float = 1.0
    theta: float = 0.36
    spacing_over_lambda: Optional[float] = field(default=None)

    def __post_init__(self):
        if not self.rician_factor >= 0:
            raise ConfigError("rician_factor must be >= 0 (inf for pure line of sight)")
        if self.ref_loss <= 0 or self.range_m <= 0:
            raise ConfigError("ref_loss and range_m must be > 0")

    @property
    def path_loss(self) -> float:
        return self.ref_loss / self.range_m ** self.exponent


def rician_channel(cfg: SystemConfig, geom: UserGeometry, rng: np.random.Generator) -> np.ndarray:
    """Draw an ``n_user x n_tx`` Rician channel with ULA line-of-sight component."""
    dh = geom.height_m - cfg.bs_height_m
    if geom.range_m < abs(dh):
        raise ConfigError(
            f"user range {geom.range_m} m is shorter than the height offset {abs(dh)} m")
    cos_phi_u = math.sqrt(geom.range_m ** 2 - dh ** 2) / geom.range_m
    spacing = cfg.spacing_over_lambda if geom.spacing_over_lambda is None else geom.spacing_over_lambda
    a_u = ula_response(geom.theta, cfg.n_tx, spacing, cos_phi_u)
    b_u = ula_response(geom.theta, cfg.n_user, spacing, cos_phi_u)
    h_los = np.outer(b_u, a_u.conj())
    shape = (cfg.n_user, cfg.n_tx)
    h_nlos = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
    k = geom.rician_factor
    if np.isinf(k):
        return math.sqrt(geom.path_loss) * h_los
    return math.sqrt(geom.path_loss / (k + 1.0)) * (math.sqrt(k) * h_los + h_nlos)
