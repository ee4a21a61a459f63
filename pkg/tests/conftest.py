import numpy as np
import pytest

from isac_pcrb import (GaussianMixture, SystemConfig, TargetEnvironment, UserGeometry,
                       capacity_waterfilling, compute_sensing_matrices, rician_channel)

REFERENCE_PRIOR = GaussianMixture((0.31, 0.24, 0.28, 0.17), (-0.74, -0.54, 0.75, 0.95),
                              (10 ** -2.5, 1e-2, 1e-2, 10 ** -2.5))


def random_psd(rng, n, power=1.0, rank=None):
    k = n if rank is None else rank
    g = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    w = g @ g.conj().T
    return w * (power / np.trace(w).real)


@pytest.fixture(scope="session")
def cfg():
    return SystemConfig()


@pytest.fixture(scope="session")
def prior():
    return REFERENCE_PRIOR


@pytest.fixture(scope="session")
def sens(prior, cfg):
    return compute_sensing_matrices(prior, cfg)


@pytest.fixture(scope="session")
def env(cfg):
    return TargetEnvironment.from_snr_db(-5.0, cfg)


@pytest.fixture(scope="session")
def channel(cfg):
    return rician_channel(cfg, UserGeometry(), np.random.default_rng(0))


@pytest.fixture(scope="session")
def capacity(channel, cfg):
    return capacity_waterfilling(channel, cfg.power_w, cfg.noise_comm_w)
