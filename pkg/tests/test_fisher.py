import math

import numpy as np
import pytest

from isac_pcrb import (GaussianMixture, QuadratureError, SystemConfig,
                       UnboundedError, beampattern, compute_sensing_matrices, crb_expected,
                       crb_point, observation_fim, pcrb, pcrb_upper, rate, steering_rx_deriv,
                       steering_tx, water_filling)
from isac_pcrb.fisher import prior_fisher, schur_objective, trace_product

from .conftest import random_psd
from .oracles import fim_tensors, pcrb_oracle, prior_fisher_oracle


def test_single_component_has_no_cross_term(cfg):
    g = GaussianMixture.single(0.3, 1e-2)
    fp11, rho = prior_fisher(g)
    assert rho == 0.0 and fp11 == pytest.approx(100.0, rel=1e-12)


def test_prior_fisher_matches_score_oracle(sens, prior):
    assert sens.fp11 == pytest.approx(prior_fisher_oracle(prior), rel=1e-9)
    assert 0 < sens.fp11 <= sum(p / v for p, v in zip(prior.weights, prior.variances))
    assert sens.rho >= 0


def test_two_mode_prior_fisher_against_oracle():
    g = GaussianMixture((0.6, 0.4), (-0.1, 0.05), (0.01, 0.02))
    assert prior_fisher(g)[0] == pytest.approx(prior_fisher_oracle(g), rel=1e-9)


def test_sensing_matrix_structure(sens, cfg):
    for a in (sens.a1, sens.a2, sens.a4):
        assert np.allclose(a, a.conj().T, atol=1e-10 * np.abs(a).max())
        assert np.linalg.eigvalsh(a)[0] >= -1e-10 * np.abs(a).max()
    # ||a||^2 = Nt and the prior mass on the domain is 1 to ~1e-20
    assert np.trace(sens.a4).real == pytest.approx(cfg.n_rx * cfg.n_tx, rel=1e-9)


def test_single_antenna_transmitter_matrices():
    cfg = SystemConfig(n_tx=1)
    m = compute_sensing_matrices(GaussianMixture.single(0.2, 1e-2), cfg)
    assert np.allclose(m.a2, 0) and np.allclose(m.a3, 0)
    assert m.a4[0, 0].real == pytest.approx(cfg.n_rx, rel=1e-9)


def test_pcrb_zero_covariance_is_prior_bound(sens, env, cfg):
    w = np.zeros((cfg.n_tx, cfg.n_tx))
    assert pcrb(w, sens, env, cfg) == pytest.approx(1 / sens.fp11)
    assert pcrb_upper(w, sens, env, cfg) == pytest.approx(1 / sens.fp11)


def test_pcrb_without_any_information_raises(cfg, env):
    from isac_pcrb.benchmarks import point_mass_matrices

    m = point_mass_matrices(0.1, cfg)
    with pytest.raises(UnboundedError):
        pcrb(np.zeros((cfg.n_tx, cfg.n_tx)), m, env, cfg)


def test_pcrb_scaling_never_increases(sens, env, cfg):
    w = random_psd(np.random.default_rng(3), cfg.n_tx, 0.5)
    assert pcrb(2 * w, sens, env, cfg) <= pcrb(w, sens, env, cfg)


def test_isotropic_pcrb_matches_full_fim_inverse(sens, prior, env, cfg):
    tens = fim_tensors(prior, env, cfg)
    fp = prior_fisher_oracle(prior)
    w = np.eye(cfg.n_tx) * cfg.power_w / cfg.n_tx
    assert pcrb(w, sens, env, cfg) == pytest.approx(pcrb_oracle(w, tens, fp, cfg), rel=1e-9)


def test_observation_fim_schur_complement(sens, env, cfg):
    w = random_psd(np.random.default_rng(8), cfg.n_tx)
    f = observation_fim(w, sens, env, cfg)
    f[0, 0] += sens.fp11
    assert np.linalg.inv(f)[0, 0] == pytest.approx(pcrb(w, sens, env, cfg), rel=1e-12)


def _hermitian_basis(n):
    out = []
    for i in range(n):
        for j in range(i, n):
            e = np.zeros((n, n), complex)
            e[i, j] = e[j, i] = 1.0
            out.append(e)
            if i != j:
                e = np.zeros((n, n), complex)
                e[i, j], e[j, i] = 1j, -1j
                out.append(e)
    return out


def test_pcrb_depends_only_on_traces(sens, env, cfg):
    from scipy.linalg import null_space

    rng = np.random.default_rng(9)
    w = random_psd(rng, cfg.n_tx)
    basis = _hermitian_basis(cfg.n_tx)
    funcs = [lambda e, a=a: np.trace(a @ e).real for a in (sens.a1, sens.a2, sens.a4)]
    funcs += [lambda e: np.trace(sens.a3 @ e).real, lambda e: np.trace(sens.a3 @ e).imag]
    lin = np.array([[f(e) for e in basis] for f in funcs])
    coef = null_space(lin) @ rng.standard_normal(len(basis) - lin.shape[0])
    d = sum(c * e for c, e in zip(coef, basis))
    d *= 1e-3 / np.abs(d).max()
    assert pcrb(w + d, sens, env, cfg) == pytest.approx(pcrb(w, sens, env, cfg), rel=1e-9)


def test_upper_bound_tight_for_single_mode_beam(cfg, env):
    g = GaussianMixture.single(0.4, 1e-4)
    m = compute_sensing_matrices(g, cfg)
    a = steering_tx(0.4, cfg)
    w = cfg.power_w * np.outer(a, a.conj()) / cfg.n_tx
    ratio = pcrb_upper(w, m, env, cfg) / pcrb(w, m, env, cfg)
    assert 1.0 <= ratio < 1.02


def test_crb_point_scaling_and_closed_form(cfg, env):
    w = np.eye(cfg.n_tx) * cfg.power_w / cfg.n_tx
    bd = steering_rx_deriv(0.0, cfg)
    expected = 1.0 / (env.info_scale(cfg) * np.vdot(bd, bd).real * cfg.power_w)
    assert crb_point(0.0, w, env, cfg) == pytest.approx(expected, rel=1e-12)
    assert crb_point(0.3, 2 * w, env, cfg) == pytest.approx(crb_point(0.3, w, env, cfg) / 2)
    assert crb_point(math.pi / 2 - 1e-6, w, env, cfg) > 1e6 * crb_point(0.0, w, env, cfg)


def test_crb_point_without_power_raises(cfg, env):
    with pytest.raises(UnboundedError):
        crb_point(0.1, np.zeros((cfg.n_tx, cfg.n_tx)), env, cfg)


def test_expected_crb_narrow_prior_limit(cfg, env):
    g = GaussianMixture.single(-0.3, 1e-6)
    w = random_psd(np.random.default_rng(4), cfg.n_tx)
    assert crb_expected(w, g, env, cfg) == pytest.approx(crb_point(-0.3, w, env, cfg), rel=1e-3)


def test_expected_crb_singular_integrand(cfg, env, prior):
    with pytest.raises(QuadratureError):
        crb_expected(np.zeros((cfg.n_tx, cfg.n_tx)), prior, env, cfg)


def test_expected_crb_diverges_with_mass_at_endfire(cfg, env):
    # the point CRB grows like 1/cos^2 at the array endfire
    g = GaussianMixture((0.5, 0.5), (-0.8, 0.8), (1e-2, 1e-2))
    with pytest.raises(QuadratureError):
        crb_expected(np.eye(cfg.n_tx) * cfg.power_w / cfg.n_tx, g, env, cfg)


def test_prior_dispersion_widens_gap(cfg, env):
    w = np.eye(cfg.n_tx) * cfg.power_w / cfg.n_tx
    gaps = []
    for sep in (0.05, 0.2, 0.4):
        g = GaussianMixture((0.5, 0.5), (-sep, sep), (1e-2, 1e-2))
        m = compute_sensing_matrices(g, cfg)
        gaps.append(crb_expected(w, g, env, cfg) - pcrb(w, m, env, cfg))
    assert gaps[0] < gaps[1] < gaps[2]


def test_rate_special_values(cfg):
    n = cfg.n_tx
    h = np.random.default_rng(0).standard_normal((3, n))
    assert rate(np.zeros((n, n)), h, 1.0) == 0.0
    assert rate(np.array([[2.0]]), np.array([[0.5]]), 0.1) == pytest.approx(math.log2(1 + 2 * 0.25 / 0.1))


def test_rate_water_filling_diagonal_channel():
    g = np.array([3.0, 1.0, 0.2])
    h = np.diag(np.sqrt(g))
    v = water_filling(g, 2.0, 0.5)
    assert rate(np.diag(v), h, 0.5) == pytest.approx(np.sum(np.log2(1 + v * g / 0.5)), rel=1e-12)


def test_rate_monotone_in_loewner_order(channel, cfg):
    rng = np.random.default_rng(6)
    w = random_psd(rng, cfg.n_tx)
    d = random_psd(rng, cfg.n_tx, 0.1, rank=2)
    assert rate(w + d, channel, cfg.noise_comm_w) >= rate(w, channel, cfg.noise_comm_w)


def test_beampattern_values(cfg):
    grid = np.linspace(-1.5, 1.5, 31)
    flat = beampattern(np.eye(cfg.n_tx) * cfg.power_w / cfg.n_tx, grid, cfg)
    assert np.allclose(flat, cfg.power_w)
    a = steering_tx(0.5, cfg)
    beam = cfg.power_w * np.outer(a, a.conj()) / cfg.n_tx
    assert beampattern(beam, [0.5], cfg)[0] == pytest.approx(cfg.power_w * cfg.n_tx)
    assert np.all(beampattern(beam, grid, cfg) >= -1e-12)


def test_trace_product(sens):
    w = random_psd(np.random.default_rng(1), sens.n_tx)
    assert trace_product(sens.a3, w) == pytest.approx(np.trace(sens.a3 @ w), rel=1e-12)
    assert schur_objective(np.zeros_like(w), sens) == 0.0
