import math

import numpy as np
import pytest
from scipy import stats

from isac_pcrb import (ConfigError, GaussianMixture, SystemConfig, TargetEnvironment, UserGeometry,
                       gm_pdf, gm_sample, rician_channel, steering_rx, steering_rx_deriv,
                       steering_tx, steering_tx_deriv)
from isac_pcrb.model import rx_deriv_norm_sq

from .conftest import REFERENCE_PRIOR


def test_steering_broadside_is_all_ones(cfg):
    assert np.allclose(steering_tx(0.0, cfg), np.ones(cfg.n_tx))
    assert np.allclose(steering_rx(0.0, cfg), np.ones(cfg.n_rx))


@pytest.mark.parametrize("theta", [-1.5, -0.74, 0.0, 0.36, 1.2])
def test_steering_unit_modulus_and_norm(cfg, theta):
    a = steering_tx(theta, cfg)
    assert np.allclose(np.abs(a), 1.0, atol=1e-15)
    assert np.vdot(a, a).real == pytest.approx(cfg.n_tx, abs=1e-12)
    b = steering_rx(theta, cfg)
    assert np.vdot(b, b).real == pytest.approx(cfg.n_rx, abs=1e-12)


def test_two_element_endfire_value():
    # phases -pi/2 * (N - 2n + 1) sin(theta) with N=2, cos(phi)=1
    cfg = SystemConfig(n_tx=2, n_rx=2, bs_height_m=0.0)
    expected = np.array([-1j, 1j])
    assert np.allclose(steering_tx(math.pi / 2 - 1e-15, cfg), expected, atol=1e-12)
    assert np.allclose(steering_rx(math.pi / 2 - 1e-15, cfg), expected, atol=1e-12)


@pytest.mark.parametrize("theta", np.linspace(-1.5, 1.5, 7))
def test_derivative_orthogonal_to_steering(cfg, theta):
    assert abs(np.vdot(steering_tx(theta, cfg), steering_tx_deriv(theta, cfg))) < 1e-12
    assert abs(np.vdot(steering_rx(theta, cfg), steering_rx_deriv(theta, cfg))) < 1e-12


def test_derivative_matches_finite_difference(cfg):
    t, h = 0.3, 1e-6
    fd = (steering_tx(t + h, cfg) - steering_tx(t - h, cfg)) / (2 * h)
    assert np.allclose(steering_tx_deriv(t, cfg), fd, atol=1e-8)


def test_rx_derivative_norm_two_elements():
    cfg = SystemConfig(n_tx=2, n_rx=2, bs_height_m=0.0)
    bd = steering_rx_deriv(0.0, cfg)
    assert np.vdot(bd, bd).real == pytest.approx(math.pi ** 2 / 2, rel=1e-14)


def test_rx_derivative_norm_closed_form(cfg):
    t = np.linspace(-1.4, 1.4, 9)
    direct = np.sum(np.abs(steering_rx_deriv(t, cfg)) ** 2, axis=-1)
    assert np.allclose(rx_deriv_norm_sq(t, cfg), direct, rtol=1e-12)


def test_derivative_vanishes_towards_endfire(cfg):
    n1 = np.linalg.norm(steering_tx_deriv(math.pi / 2 - 1e-3, cfg))
    n2 = np.linalg.norm(steering_tx_deriv(math.pi / 2 - 1e-4, cfg))
    assert n2 / n1 == pytest.approx(0.1, rel=1e-3)


def test_cos_phi_geometry(cfg):
    assert cfg.cos_phi == pytest.approx(math.sqrt(50 ** 2 - 10 ** 2) / 50)


@pytest.mark.parametrize("kwargs", [dict(n_tx=0), dict(power_w=0.0), dict(noise_sense_w=-1.0),
                                    dict(bs_height_m=60.0), dict(n_rx=2.5)])
def test_system_config_rejects_invalid(kwargs):
    with pytest.raises(ConfigError):
        SystemConfig(**kwargs)


def test_mixture_validation():
    with pytest.raises(ConfigError):
        GaussianMixture((0.5, 0.4), (0.0, 0.1), (0.01, 0.01))
    with pytest.raises(ConfigError):
        GaussianMixture((1.0,), (0.0,), (0.0,))
    with pytest.raises(ConfigError):
        GaussianMixture((1.0,), (2.0,), (0.01,))


def test_single_component_mode_value():
    g = GaussianMixture.single(0.2, 1e-2)
    assert gm_pdf(0.2, g) == pytest.approx(1 / math.sqrt(2 * math.pi * 1e-2), rel=1e-14)


def test_pdf_matches_scipy_and_is_stable_in_tails():
    t = np.linspace(-1.5, 1.5, 101)
    ref = sum(p * stats.norm.pdf(t, m, math.sqrt(v)) for p, m, v in
              zip(REFERENCE_PRIOR.weights, REFERENCE_PRIOR.means, REFERENCE_PRIOR.variances))
    assert np.allclose(REFERENCE_PRIOR.pdf(t), ref, rtol=1e-12, atol=0)
    narrow = GaussianMixture.single(0.0, 1e-4)
    assert np.isfinite(narrow.logpdf(1.5)) and narrow.logpdf(1.5) < -1e4


def test_pdf_integrates_to_one_on_domain():
    from scipy.integrate import quad

    total = sum(quad(REFERENCE_PRIOR.pdf, a, b, epsabs=1e-13)[0] for a, b in
                [(-math.pi / 2, 0.0), (0.0, math.pi / 2)])
    assert total == pytest.approx(1.0, abs=1e-6)


def test_symmetric_prior_has_symmetric_pdf():
    g = GaussianMixture((0.5, 0.5), (-0.4, 0.4), (0.02, 0.02))
    t = np.linspace(0, 1.5, 20)
    assert np.allclose(g.pdf(t), g.pdf(-t), rtol=1e-14)


def test_sample_bin_frequencies():
    rng = np.random.default_rng(11)
    n = 100_000
    draws = gm_sample(REFERENCE_PRIOR, rng, n)
    edges = np.array([-math.pi / 2, -0.64, 0.0, 0.85, math.pi / 2])

    def cdf(x):
        return sum(p * stats.norm.cdf(x, m, math.sqrt(v)) for p, m, v in
                   zip(REFERENCE_PRIOR.weights, REFERENCE_PRIOR.means, REFERENCE_PRIOR.variances))

    expected = np.diff(cdf(edges))
    counts = np.histogram(draws, edges)[0] / n
    for got, p in zip(counts, expected):
        assert abs(got - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_sample_reproducible_and_in_domain():
    a = gm_sample(REFERENCE_PRIOR, np.random.default_rng(5), 1000)
    b = gm_sample(REFERENCE_PRIOR, np.random.default_rng(5), 1000)
    assert np.array_equal(a, b)
    wide = GaussianMixture.single(1.5, 1.0)
    s = wide.sample(np.random.default_rng(0), 5000)
    assert np.all((s >= -math.pi / 2) & (s < math.pi / 2))


def test_narrow_prior_samples_near_mean():
    s = GaussianMixture.single(0.3, 1e-12).sample(np.random.default_rng(1), 100)
    assert np.allclose(s, 0.3, atol=1e-5)


def test_snr_inversion(cfg):
    env = TargetEnvironment.from_snr_db(-5.0, cfg)
    assert env.snr_db(cfg) == pytest.approx(-5.0, abs=1e-12)
    assert abs(env.alpha) == pytest.approx(math.sqrt(10 ** -0.5 * 1e-12 / 25), rel=1e-14)
    with pytest.raises(ConfigError):
        TargetEnvironment(0.0)


def test_rician_reference_defaults():
    g = UserGeometry()
    assert g.rician_factor == pytest.approx(10 ** -0.8)
    assert g.ref_loss == pytest.approx(1e-3)
    assert (g.exponent, g.range_m, g.height_m, g.theta) == (3.5, 400.0, 1.0, 0.36)


def test_rician_mean_energy(cfg):
    g = UserGeometry()
    rng = np.random.default_rng(3)
    energy = np.mean([np.linalg.norm(rician_channel(cfg, g, rng)) ** 2 for _ in range(10_000)])
    assert energy == pytest.approx(g.path_loss * cfg.n_user * cfg.n_tx, rel=0.05)


def test_rician_pure_los_is_rank_one(cfg):
    h = rician_channel(cfg, UserGeometry(rician_factor=math.inf), np.random.default_rng(0))
    s = np.linalg.svd(h, compute_uv=False)
    assert s[1] < 1e-12 * s[0]


def test_rician_rejects_bad_geometry(cfg):
    with pytest.raises(ConfigError):
        rician_channel(cfg, UserGeometry(range_m=5.0, height_m=20.0), np.random.default_rng(0))
