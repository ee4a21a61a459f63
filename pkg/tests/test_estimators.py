import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from isac_pcrb import (ConfigError, GaussianMixture, KnownAngleDesign, MAPAngleEstimator,
                       MLEAngleEstimator, OptimalISACDesign, SuboptimalISACDesign,
                       TargetEnvironment, gen_echo, gen_signals)


def test_params_and_clone():
    est = OptimalISACDesign(rate_target=5.5, snr_db=0.0)
    params = est.get_params()
    assert params["rate_target"] == 5.5
    twin = clone(est).set_params(rate_target=6.0)
    assert twin.rate_target == 6.0 and est.rate_target == 5.5


def test_designs_fit_and_compare(channel):
    opt = OptimalISACDesign().fit(channel)
    sub = SuboptimalISACDesign().fit(channel)
    assert opt.n_features_in_ == 10
    assert opt.score() >= sub.score()
    assert sub.rate_ >= 6.5 - 1e-6
    assert opt.beampattern(np.array([0.0, 0.5])).shape == (2,)


def test_known_angle_design(channel):
    est = KnownAngleDesign(theta=0.3, perturb_variance=1e-3, random_state=0).fit(channel)
    again = clone(est).fit(channel)
    assert np.array_equal(est.covariance_, again.covariance_)


def test_design_validation(channel):
    with pytest.raises(ConfigError):
        OptimalISACDesign().fit(channel[:, :3])
    with pytest.raises(ConfigError):
        OptimalISACDesign(rate_target=-1.0).fit(channel)
    with pytest.raises(NotFittedError):
        OptimalISACDesign().score()


def test_angle_estimators(cfg):
    rng = np.random.default_rng(3)
    x = gen_signals(np.eye(cfg.n_tx) * cfg.power_w / cfg.n_tx, cfg.symbols, rng)
    env = TargetEnvironment.from_snr_db(20.0, cfg)
    thetas = np.array([-0.5, 0.2, 0.8])
    ys = np.stack([gen_echo(x, t, env, cfg, rng).y for t in thetas])
    mle = MLEAngleEstimator(grid_points=512).fit(x)
    assert np.allclose(mle.predict(ys), thetas, atol=1e-2)
    prior = GaussianMixture((0.5, 0.5), (-0.5, 0.5), (0.1, 0.1))
    est = MAPAngleEstimator(prior=prior, grid_points=512).fit(x)
    assert est.score(ys, thetas) > -1e-4
    with pytest.raises(ConfigError):
        est.predict(ys[:, :3])
