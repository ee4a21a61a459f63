"""Feasibility via MIMO capacity and the optimal covariance from the
Schur-complement (LMI) reformulation, solved by a primal log-barrier method."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .exceptions import ConfigError, InfeasibleError, SolverError
from .fisher import SensingMatrices, pcrb, rate, schur_objective, trace_product
from .model import SystemConfig, TargetEnvironment
from .numerics import RANK_TOL, hermitian_evd, hermitian_part, reduced_svd, water_filling

__all__ = [
    "OptimalSolveResult",
    "BarrierOptions",
    "capacity_waterfilling",
    "check_feasibility",
    "solve_p3",
    "rank_diagnostics",
    "hermitian_basis",
]

logger = logging.getLogger(__name__)
LN2 = math.log(2.0)


@dataclass
class OptimalSolveResult:
    """Output of :func:`solve_p3`.

    ``duals`` holds ``(mu_p, mu_r, z2)`` recovered from the barrier
    multipliers; they are estimates for reporting only.
    """

    w: np.ndarray
    t_star: float
    pcrb_value: float
    rate_value: float
    duals: tuple
    kkt_residual: float
    rank_w: int
    iterations: int
    boundary: bool = False
    kkt_parts: tuple = ()
    history: list = field(default_factory=list, repr=False)


@dataclass(frozen=True)
class BarrierOptions:
    initial_weight: float = 1.0
    decrease: float = 0.2
    gap_rel: float = 1e-8
    gap_abs: float = 1e-10
    newton_tol: float = 1e-11
    max_newton: int = 200
    max_outer: int = 100
    kkt_tol: float = 1e-6


def capacity_waterfilling(h: np.ndarray, power: float, noise: float):
    """Channel capacity and the capacity-achieving covariance.

    Returns
    -------
    (r_max, w_c) : (float, ndarray)
    """
    h = np.atleast_2d(np.asarray(h, dtype=complex))
    if not np.any(h):
        raise ConfigError("channel matrix is zero")
    _, s, v = reduced_svd(h)
    rank = int(np.sum(s > RANK_TOL * s[0]))
    gains = s[:rank] ** 2
    alloc = water_filling(gains, power, noise)
    vr = v[:, :rank]
    w_c = hermitian_part((vr * alloc) @ vr.conj().T)
    r_max = float(np.sum(np.log1p(alloc * gains / noise)) / LN2)
    return r_max, w_c


def check_feasibility(rbar: float, r_max: float) -> bool:
    return bool(rbar <= r_max)


def rank_diagnostics(w: np.ndarray, tol: float = RANK_TOL):
    """Numerical rank of a Hermitian matrix and its descending eigenvalues."""
    vals, _ = hermitian_evd(w)
    top = max(vals[0], 0.0)
    rank = int(np.sum(vals > tol * top)) if top > 0 else 0
    return rank, vals


@lru_cache(maxsize=8)
def hermitian_basis(n: int) -> np.ndarray:
    """Orthonormal basis (Frobenius) of ``n x n`` Hermitian matrices, shape ``(n*n, n, n)``."""
    basis = []
    for i in range(n):
        e = np.zeros((n, n), dtype=complex)
        e[i, i] = 1.0
        basis.append(e)
    r = 1.0 / math.sqrt(2.0)
    for i in range(n):
        for j in range(i + 1, n):
            e = np.zeros((n, n), dtype=complex)
            e[i, j] = e[j, i] = r
            basis.append(e)
            e = np.zeros((n, n), dtype=complex)
            e[i, j] = 1j * r
            e[j, i] = -1j * r
            basis.append(e)
    out = np.array(basis)
    out.setflags(write=False)
    return out


class _BarrierProblem:
    """Barrier function of the LMI problem.

    The auxiliary objective ``t`` is carried through its Schur slack
    ``u = schur(W) - t`` so that ``det B = tr(A4 W) * u`` has no
    cancellation near the optimum.  Coordinates are ``z = (u, x)`` with
    ``x`` the coordinates of ``W`` in :func:`hermitian_basis`.
    """

    def __init__(self, m: SensingMatrices, h, cfg: SystemConfig, rbar: Optional[float]):
        n = cfg.n_tx
        self.n = n
        self.power = cfg.power_w
        self.rbar = rbar
        self.basis = hermitian_basis(n)
        # coef(C)_k = tr(C E_k)
        self._coef_mat = self.basis.transpose(0, 2, 1).reshape(n * n, -1)
        self.u11 = self.coef(m.a1 + m.a2).real
        self.u22 = self.coef(m.a4).real
        self.c = self.coef(m.a3)
        self.e = self.coef(np.eye(n)).real
        self.hn = np.asarray(h, dtype=complex) / math.sqrt(cfg.noise_comm_w)
        self.n_constraints = 2 + n + 1 + (1 if rbar is not None else 0)

    def coef(self, c: np.ndarray) -> np.ndarray:
        return self._coef_mat @ np.asarray(c).ravel()

    def to_matrix(self, x: np.ndarray) -> np.ndarray:
        return np.tensordot(x, self.basis, axes=1)

    def to_coords(self, w: np.ndarray) -> np.ndarray:
        return self.coef(w).real

    def _quad_form_hessian(self, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        # Re tr(L E_k R E_l) for all k, l
        nb = self.basis.shape[0]
        t = (left @ self.basis @ right).reshape(nb, -1)
        return np.real(t @ self._coef_mat.T)

    def parts(self, z: np.ndarray):
        """Slack values of every constraint, or ``None`` when outside the domain."""
        u, x = z[0], z[1:]
        w = self.to_matrix(x)
        try:
            chol = np.linalg.cholesky(w)
        except np.linalg.LinAlgError:
            return None
        b22 = self.u22 @ x
        b12 = self.c @ x
        s = self.power - self.e @ x
        if not (u > 0 and b22 > 0 and s > 0):
            return None
        schur = self.u11 @ x - abs(b12) ** 2 / b22
        out = dict(w=w, chol=chol, u=u, b22=b22, b12=b12, schur=schur, s=s,
                   b11=abs(b12) ** 2 / b22 + u)
        if self.rbar is not None:
            g = np.eye(self.hn.shape[0]) + self.hn @ w @ self.hn.conj().T
            sign, logdet = np.linalg.slogdet(g)
            r = logdet / LN2
            if sign <= 0 or not r - self.rbar > 0:
                return None
            out.update(g=g, r=r)
        return out

    def value(self, z, p, weight):
        logdet_w = 2.0 * np.sum(np.log(np.real(np.diag(p["chol"]))))
        phi = -math.log(p["u"]) - math.log(p["b22"]) - logdet_w - math.log(p["s"])
        if self.rbar is not None:
            phi -= math.log(p["r"] - self.rbar)
        return (p["u"] - p["schur"]) / weight + phi

    def derivatives(self, z, p, weight):
        nb = self.basis.shape[0]
        grad = np.zeros(nb + 1)
        hess = np.zeros((nb + 1, nb + 1))
        u, b22, b12 = p["u"], p["b22"], p["b12"]

        grad[0] = 1.0 / weight - 1.0 / u
        hess[0, 0] = 1.0 / u ** 2

        # -schur(W) / weight, with schur = u11.x - |c.x|^2 / u22.x
        q = abs(b12) ** 2
        dq = 2.0 * np.real(np.conj(b12) * self.c)
        d2q = 2.0 * np.real(np.outer(self.c, self.c.conj()))
        df = dq / b22 - q * self.u22 / b22 ** 2
        d2f = (d2q / b22 - (np.outer(dq, self.u22) + np.outer(self.u22, dq)) / b22 ** 2
               + 2.0 * q * np.outer(self.u22, self.u22) / b22 ** 3)
        gx = -(self.u11 - df) / weight
        hx = d2f / weight

        gx += -self.u22 / b22
        hx += np.outer(self.u22, self.u22) / b22 ** 2

        w_inv = hermitian_part(np.linalg.inv(p["w"]))
        gx += -self.coef(w_inv).real
        hx += self._quad_form_hessian(w_inv, w_inv)

        s = p["s"]
        gx += self.e / s
        hx += np.outer(self.e, self.e) / s ** 2

        if self.rbar is not None:
            mm = self.rate_gradient_matrix(p["g"])
            dr = self.coef(mm).real / LN2
            d2r = -self._quad_form_hessian(mm, mm) / LN2
            slack = p["r"] - self.rbar
            gx += -dr / slack
            hx += -d2r / slack + np.outer(dr, dr) / slack ** 2
        grad[1:] = gx
        hess[1:, 1:] = hx
        return grad, hess

    def rate_gradient_matrix(self, g):
        # Hn^H (I + Hn W Hn^H)^{-1} Hn, the (ln 2 scaled) gradient of the rate
        return hermitian_part(self.hn.conj().T @ np.linalg.solve(g, self.hn))


def _newton_direction(grad, hess):
    d = np.sqrt(np.abs(np.diag(hess)))
    d[d == 0] = 1.0
    hs = hess / np.outer(d, d)
    gs = grad / d
    try:
        chol = np.linalg.cholesky(hs)
        y = np.linalg.solve(chol, -gs)
        step = np.linalg.solve(chol.conj().T, y)
    except np.linalg.LinAlgError:
        step = np.linalg.lstsq(hs, -gs, rcond=None)[0]
    return step / d


def _initial_point(prob: _BarrierProblem, m, h, cfg, rbar, w_c, r_max):
    n = cfg.n_tx
    p_tot = cfg.power_w
    eye = np.eye(n) * p_tot / n
    for eps in (1e-3, 1e-5, 1e-7, 1e-9, 1e-11):
        scale = (1.0 - eps)
        wc = w_c * scale
        def blend(lam):
            return (1.0 - lam) * wc + lam * scale * eye
        if rbar is None or rate(blend(0.5), h, cfg.noise_comm_w) > rbar:
            w0 = blend(0.5)
        else:
            r_top = rate(wc, h, cfg.noise_comm_w)
            if r_top <= rbar:
                continue
            target = rbar + 0.5 * (r_top - rbar)
            lam = 0.5
            while lam > 1e-14 and rate(blend(lam), h, cfg.noise_comm_w) < target:
                lam *= 0.5
            if lam <= 1e-14:
                continue
            w0 = blend(lam)
        obj = schur_objective(w0, m)
        z0 = np.concatenate(([max(1e-3 * abs(obj), 1e-12)], prob.to_coords(w0)))
        if prob.parts(z0) is not None:
            return z0
    return None


def _fit_multipliers(w, d_mat, grad_r):
    vals, vecs = hermitian_evd(w)
    vr = vecs[:, vals > RANK_TOL * vals[0]]
    cols = [np.eye(w.shape[0])] + ([] if grad_r is None else [-grad_r])
    a = np.stack([(vr.conj().T @ c @ vr).ravel() for c in cols], axis=1)
    b = (vr.conj().T @ d_mat @ vr).ravel()
    a_ri = np.concatenate([a.real, a.imag])
    b_ri = np.concatenate([b.real, b.imag])
    coef = np.linalg.lstsq(a_ri, b_ri, rcond=None)[0]
    return float(coef[0]), (float(coef[1]) if grad_r is not None else 0.0)


def _boundary_result(w_c, m, h, env, cfg):
    rank_w, _ = rank_diagnostics(w_c)
    return OptimalSolveResult(
        w=w_c, t_star=schur_objective(w_c, m), pcrb_value=pcrb(w_c, m, env, cfg),
        rate_value=rate(w_c, h, cfg.noise_comm_w), duals=(math.nan, math.nan, math.nan),
        kkt_residual=0.0, rank_w=rank_w, iterations=0, boundary=True)


def solve_p3(m: SensingMatrices, h: np.ndarray, env: TargetEnvironment, cfg: SystemConfig,
             rbar: float, options: BarrierOptions = BarrierOptions()) -> OptimalSolveResult:
    """PCRB-optimal transmit covariance under rate and power constraints.

    Maximises ``t`` subject to the 2x2 LMI ``B(t, W) >= 0``, the rate and
    power constraints and ``W >= 0`` with a primal log-barrier
    path-following method (damped Newton steps, exact Hessians).

    Raises
    ------
    InfeasibleError
        If ``rbar`` exceeds the channel capacity.
    SolverError
        If the final KKT residual is above ``options.kkt_tol``.
    """
    h = np.atleast_2d(np.asarray(h, dtype=complex))
    r_max, w_c = capacity_waterfilling(h, cfg.power_w, cfg.noise_comm_w)
    if not check_feasibility(rbar, r_max):
        raise InfeasibleError(f"rate target {rbar} exceeds capacity {r_max:.6f}",
                              r_max=r_max, rbar=rbar)
    if cfg.n_tx == 1:
        w = np.array([[cfg.power_w]], dtype=complex)
        return OptimalSolveResult(
            w=w, t_star=schur_objective(w, m), pcrb_value=pcrb(w, m, env, cfg),
            rate_value=rate(w, h, cfg.noise_comm_w), duals=(math.nan, math.nan, 0.0),
            kkt_residual=0.0, rank_w=1, iterations=0)
    if rbar >= r_max - 1e-9 * max(1.0, r_max):
        return _boundary_result(w_c, m, h, env, cfg)

    prob = _BarrierProblem(m, h, cfg, rbar if rbar > 0 else None)
    z = _initial_point(prob, m, h, cfg, prob.rbar, w_c, r_max)
    if z is None:
        logger.info("no strictly feasible interior point; returning the capacity point")
        return _boundary_result(w_c, m, h, env, cfg)

    weight = options.initial_weight
    iterations = 0
    history = []
    for _ in range(options.max_outer):
        for _ in range(options.max_newton):
            p = prob.parts(z)
            grad, hess = prob.derivatives(z, p, weight)
            step = _newton_direction(grad, hess)
            dec2 = float(-grad @ step)
            iterations += 1
            if dec2 <= 2 * options.newton_tol:
                break
            lam = math.sqrt(max(dec2, 0.0))
            alpha = 1.0 if lam < 0.25 else 1.0 / (1.0 + lam)
            f0 = prob.value(z, p, weight)
            while True:
                cand = z + alpha * step
                pc = prob.parts(cand)
                if pc is not None:
                    if lam < 0.25 or prob.value(cand, pc, weight) <= f0 + 0.25 * alpha * (grad @ step):
                        break
                alpha *= 0.5
                if alpha < 1e-20:
                    raise SolverError("line search failed", last=prob.to_matrix(z[1:]))
            z = cand
        gap = prob.n_constraints * weight
        p = prob.parts(z)
        t_cur = p["schur"] - p["u"]
        history.append((weight, t_cur, gap))
        if gap <= options.gap_rel * abs(t_cur) + options.gap_abs:
            break
        weight *= options.decrease

    p = prob.parts(z)
    w = hermitian_part(p["w"])
    t_star = float(p["schur"] - p["u"])
    # Dual estimates.  z2, z3 come from the barrier multiplier of the LMI,
    # normalised so that the t-stationarity condition z1 = 1 holds.  The power
    # and rate slacks are ~weight/multiplier and lose digits to cancellation, so
    # (mu_p, mu_r) are instead fitted from W-stationarity on range(W), where
    # complementarity forces Z_W to vanish.  The residual is the PSD violation
    # of Z_W plus the relative duality gap.
    det_b = p["b22"] * p["u"]
    z1 = weight * p["b22"] / det_b
    z2 = -weight * p["b12"] / det_b / z1
    z3 = weight * p["b11"] / det_b / z1
    d_mat = (m.a1 + m.a2) + z2 * m.a3.conj().T + np.conj(z2) * m.a3 + z3 * m.a4
    grad_r = prob.rate_gradient_matrix(p["g"]) / LN2 if prob.rbar is not None else None
    rate_active = grad_r is not None and p["r"] - prob.rbar <= 1e-6 * max(1.0, prob.rbar)
    mu_p, mu_r = _fit_multipliers(w, d_mat, grad_r if rate_active else None)
    z_w = hermitian_part(mu_p * np.eye(cfg.n_tx) - d_mat - (mu_r * grad_r if rate_active else 0.0))
    zb = np.array([[1.0, z2], [np.conj(z2), z3]])
    b_mat = np.array([[p["b11"], p["b12"]], [np.conj(p["b12"]), p["b22"]]])
    scale = max(np.linalg.norm(d_mat), 1.0)
    gap = (np.real(np.trace(zb @ b_mat)) + np.real(trace_product(z_w, w)) + mu_p * p["s"]
           + (mu_r * (p["r"] - prob.rbar) if rate_active else 0.0))
    kkt_parts = (max(0.0, -float(np.linalg.eigvalsh(z_w)[0])) / scale,
                 max(0.0, -float(np.linalg.eigvalsh(zb)[0])) / max(1.0, abs(z3)),
                 abs(gap) / max(abs(t_star), 1.0))
    kkt = max(kkt_parts)
    rank_w, _ = rank_diagnostics(w)
    result = OptimalSolveResult(
        w=w, t_star=t_star, pcrb_value=pcrb(w, m, env, cfg),
        rate_value=rate(w, h, cfg.noise_comm_w), duals=(mu_p, mu_r, complex(z2)),
        kkt_residual=float(kkt), rank_w=rank_w, iterations=iterations, history=history,
        kkt_parts=kkt_parts)
    if kkt > options.kkt_tol:
        raise SolverError(f"barrier method stopped with KKT residual {kkt:.3e}",
                          residual=kkt, last=result)
    return result
