"""Reference computations that do not reuse the library's formulas."""
import math

import numpy as np
from scipy.integrate import quad, quad_vec

from isac_pcrb.model import steering_rx, steering_rx_deriv, steering_tx, steering_tx_deriv


def _pieces(prior):
    lo, hi = -math.pi / 2, math.pi / 2
    marks = np.concatenate([np.asarray(prior.means) + k * prior.stds
                            for k in (-8, -4, -2, -1, 0, 1, 2, 4, 8)])
    pts = sorted(set(np.clip(np.concatenate([[lo, hi], marks]), lo, hi)))
    return list(zip(pts[:-1], pts[1:]))


def prior_fisher_oracle(prior):
    """``E[(d/dtheta log p)^2]`` by adaptive quadrature of the score."""
    def score2(t):
        comp = np.exp(prior.component_logpdf(t))
        d = -(t - np.asarray(prior.means)) / np.asarray(prior.variances)
        p = comp.sum()
        return (comp * d).sum() ** 2 / p if p > 0 else 0.0

    return sum(quad(score2, a, b, epsabs=0, epsrel=1e-13, limit=200)[0] for a, b in _pieces(prior))


def fim_tensors(prior, env, cfg):
    """Prior average of ``D_j^H D_i`` for the mean derivatives w.r.t.
    ``(theta, alpha_R, alpha_I)`` of ``alpha b a^H``; the 3x3 FIM of a
    covariance ``W`` is ``(2L/sigma^2) Re tr(G_ij W)``."""
    al = env.alpha

    def g(t):
        a, b = steering_tx(t, cfg), steering_rx(t, cfg)
        ad, bd = steering_tx_deriv(t, cfg), steering_rx_deriv(t, cfg)
        d = [al * (np.outer(bd, a.conj()) + np.outer(b, ad.conj())),
             np.outer(b, a.conj()), 1j * np.outer(b, a.conj())]
        return np.stack([d[j].conj().T @ d[i] for i in range(3) for j in range(3)]) * prior.pdf(t)

    tot = 0
    for a, b in _pieces(prior):
        tot = tot + quad_vec(g, a, b, epsabs=0, epsrel=1e-13, norm="max")[0]
    return tot.reshape((3, 3) + tot.shape[1:])


def pcrb_oracle(w, tens, fp11, cfg):
    c = 2 * cfg.symbols / cfg.noise_sense_w
    f = np.array([[c * np.real(np.trace(tens[i, j] @ w)) for j in range(3)] for i in range(3)])
    f[0, 0] += fp11
    return np.linalg.inv(f)[0, 0]


def capacity_oracle(h, power, noise):
    """Water level by plain bisection on the eigenvalues of ``H^H H``."""
    gains = np.clip(np.linalg.eigvalsh(h.conj().T @ h), 0.0, None)
    gains = gains[gains > 1e-12 * gains.max()]
    floor = noise / gains
    lo, hi = 0.0, floor.max() + power
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if np.clip(mid - floor, 0, None).sum() > power:
            hi = mid
        else:
            lo = mid
    v = np.clip(0.5 * (lo + hi) - floor, 0, None)
    return float(np.sum(np.log2(1 + v * gains / noise)))


def rank_one_pcrbs(m, env, cfg, vectors):
    """PCRB of ``P v v^H`` for each row of ``vectors`` (unit norm)."""
    p = cfg.power_w

    def quad_form(a):
        return np.einsum("ki,ij,kj->k", vectors.conj(), a, vectors)

    t1 = quad_form(m.a1).real * p
    t2 = quad_form(m.a2).real * p
    t3 = quad_form(m.a3) * p
    t4 = quad_form(m.a4).real * p
    c = env.info_scale(cfg)
    return 1.0 / (m.fp11 + c * (t1 + t2 - np.abs(t3) ** 2 / t4))
