"""Scikit-learn style wrappers.

Design estimators are fitted on a channel matrix and expose the designed
covariance; angle estimators are fitted on a transmitted block and predict
angles from stacks of echo blocks.
"""
from __future__ import annotations

from functools import lru_cache
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_channel, check_echo_stack, check_rate_target, check_waveform
from .benchmarks import BenchmarkSpec, solve_known_angle
from .estimation import EchoObservation, GridSpec, map_estimate, mle_estimate
from .fisher import beampattern, compute_sensing_matrices, pcrb, pcrb_upper, rate
from .model import GaussianMixture, SystemConfig, TargetEnvironment
from .optimal import solve_p3
from .suboptimal import solve_p4

__all__ = ["OptimalISACDesign", "SuboptimalISACDesign", "KnownAngleDesign",
           "MAPAngleEstimator", "MLEAngleEstimator"]

_DEFAULT_PRIOR = GaussianMixture((0.31, 0.24, 0.28, 0.17), (-0.74, -0.54, 0.75, 0.95),
                                 (10 ** -2.5, 1e-2, 1e-2, 10 ** -2.5))


@lru_cache(maxsize=16)
def _sensing(prior, system):
    return compute_sensing_matrices(prior, system)


class _DesignBase(BaseEstimator):
    def __init__(self, system: Optional[SystemConfig] = None,
                 prior: Optional[GaussianMixture] = None, snr_db: float = -5.0,
                 rate_target: float = 6.5, alpha_phase: float = 0.0):
        self.system = system
        self.prior = prior
        self.snr_db = snr_db
        self.rate_target = rate_target
        self.alpha_phase = alpha_phase

    def _setup(self, h):
        self.system_ = self.system if self.system is not None else SystemConfig()
        self.prior_ = self.prior if self.prior is not None else _DEFAULT_PRIOR
        self.env_ = TargetEnvironment.from_snr_db(self.snr_db, self.system_, self.alpha_phase)
        self.sensing_ = _sensing(self.prior_, self.system_)
        self.channel_ = check_channel(h, self.system_.n_tx)
        self.n_features_in_ = self.system_.n_tx
        return check_rate_target(self.rate_target)

    def _finish(self, w):
        s, m, env = self.system_, self.sensing_, self.env_
        self.covariance_ = w
        self.pcrb_ = pcrb(w, m, env, s)
        self.pcrb_upper_ = pcrb_upper(w, m, env, s)
        self.rate_ = rate(w, self.channel_, s.noise_comm_w)
        return self

    def score(self, h=None, y=None):
        """Negative PCRB of the fitted design (higher is better)."""
        check_is_fitted(self, "covariance_")
        if h is None:
            return -self.pcrb_
        return -pcrb(self.covariance_, self.sensing_, self.env_, self.system_)

    def beampattern(self, theta):
        check_is_fitted(self, "covariance_")
        return beampattern(self.covariance_, theta, self.system_)


class OptimalISACDesign(_DesignBase):
    """PCRB-optimal covariance (convex reformulation, barrier method)."""

    def fit(self, h, y=None):
        rbar = self._setup(h)
        self.result_ = solve_p3(self.sensing_, self.channel_, self.env_, self.system_, rbar)
        return self._finish(self.result_.w)


class SuboptimalISACDesign(_DesignBase):
    """Covariance minimising the PCRB upper bound (semi-closed form)."""

    def fit(self, h, y=None):
        rbar = self._setup(h)
        self.result_ = solve_p4(self.sensing_, self.channel_, self.env_, self.system_, rbar)
        return self._finish(self.result_.w)


class KnownAngleDesign(_DesignBase):
    """Point-CRB design for a trusted angle, optionally perturbed."""

    def __init__(self, system=None, prior=None, snr_db=-5.0, rate_target=6.5, alpha_phase=0.0,
                 theta=0.0, perturb_variance=0.0, random_state=None):
        super().__init__(system, prior, snr_db, rate_target, alpha_phase)
        self.theta = theta
        self.perturb_variance = perturb_variance
        self.random_state = random_state

    def fit(self, h, y=None):
        rbar = self._setup(h)
        mode = "inexact" if self.perturb_variance > 0 else "exact"
        spec = BenchmarkSpec(mode, self.theta, self.perturb_variance)
        rng = np.random.default_rng(self.random_state)
        w = solve_known_angle(spec, self.channel_, self.system_, self.env_, rbar, rng)
        return self._finish(w)


class _AngleBase(BaseEstimator):
    def __init__(self, system: Optional[SystemConfig] = None, grid_points: int = 2048,
                 refine_tol: float = 1e-5):
        self.system = system
        self.grid_points = grid_points
        self.refine_tol = refine_tol

    def fit(self, x, y=None):
        """Store the transmitted block ``x`` (``n_tx x symbols``)."""
        self.system_ = self.system if self.system is not None else SystemConfig()
        self.waveform_ = check_waveform(x, self.system_.n_tx)
        self.grid_ = GridSpec(points=self.grid_points, refine_tol=self.refine_tol)
        self.n_features_in_ = self.system_.n_tx
        return self

    def predict(self, y):
        """Angle estimates for a stack of echo blocks ``(n, n_rx, symbols)``."""
        check_is_fitted(self, "waveform_")
        ys = check_echo_stack(y, self.system_.n_rx, self.waveform_.shape[1])
        return np.array([self._one(EchoObservation(b, self.waveform_, np.nan, 0j)) for b in ys])

    def score(self, y, theta):
        """Negative mean squared angle error."""
        est = self.predict(y)
        return -float(np.mean((est - np.asarray(theta, dtype=float)) ** 2))


class MAPAngleEstimator(_AngleBase):
    def __init__(self, system=None, prior=None, grid_points=2048, refine_tol=1e-5):
        super().__init__(system, grid_points, refine_tol)
        self.prior = prior

    def _one(self, obs):
        prior = self.prior if self.prior is not None else _DEFAULT_PRIOR
        return map_estimate(obs, prior, self.system_, self.grid_)


class MLEAngleEstimator(_AngleBase):
    def _one(self, obs):
        return mle_estimate(obs, self.system_, self.grid_)
