"""Numerical kernels: composite Gauss-Legendre quadrature, Hermitian EVD/SVD
helpers and water-filling."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .exceptions import ConfigError, LinAlgError, QuadratureError
from .model import ANGLE_DOMAIN

__all__ = [
    "RANK_TOL",
    "QuadratureSpec",
    "quadrature_nodes",
    "integrate",
    "integrate_scalar",
    "integrate_matrix",
    "hermitian_evd",
    "reduced_svd",
    "psd_inv_sqrt",
    "psd_sqrt",
    "water_filling",
    "numerical_rank",
    "hermitian_part",
]

#: Relative threshold (to the largest singular value) used for every rank decision.
RANK_TOL = 1e-6


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite Gauss-Legendre rule with panel doubling.

    ``panels`` is the number of panels spread over the whole domain before
    any refinement; ``max_panels`` caps the doubling.
    """

    panels: int = 64
    nodes_per_panel: int = 16
    rel_tol: float = 1e-9
    max_panels: int = 8192

    def __post_init__(self):
        if self.panels < 1 or self.nodes_per_panel < 1:
            raise ConfigError("panels and nodes_per_panel must be >= 1")
        if not (0 < self.rel_tol <= 1e-3):
            raise ConfigError("rel_tol must lie in (0, 1e-3]")
        if self.max_panels < self.panels:
            raise ConfigError("max_panels must be >= panels")


@lru_cache(maxsize=32)
def _gauss_legendre(n: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def _panel_edges(domain, breakpoints, panels: int) -> np.ndarray:
    lo, hi = domain
    edges = [lo, hi]
    if breakpoints is not None:
        bp = np.asarray(breakpoints, dtype=float)
        edges.extend(bp[(bp > lo) & (bp < hi)].tolist())
    edges = np.unique(edges)
    span = hi - lo
    out = [edges[:1]]
    for a, b in zip(edges[:-1], edges[1:]):
        n = max(1, math.ceil(panels * (b - a) / span))
        out.append(np.linspace(a, b, n + 1)[1:])
    return np.concatenate(out)


def quadrature_nodes(domain=ANGLE_DOMAIN, spec: QuadratureSpec = QuadratureSpec(),
                     breakpoints=None, panels: Optional[int] = None):
    """Nodes and weights of the composite rule with ``panels`` base panels."""
    x, w = _gauss_legendre(spec.nodes_per_panel)
    edges = _panel_edges(domain, breakpoints, spec.panels if panels is None else panels)
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    nodes = (0.5 * (a + b) + half * x).ravel()
    weights = (half * w).ravel()
    return nodes, weights


def integrate(f: Callable[[np.ndarray], np.ndarray], domain=ANGLE_DOMAIN,
              spec: QuadratureSpec = QuadratureSpec(), breakpoints=None):
    """Integrate a vectorised ``f`` over ``domain``.

    ``f`` receives a 1-D array of abscissae and returns an array whose first
    axis runs over them.  Panels are doubled until two successive estimates
    agree to ``spec.rel_tol`` relative to the integral of ``|f|``.

    Raises
    ------
    QuadratureError
        If ``spec.max_panels`` is reached first.
    """
    def rule(panels):
        nodes, weights = quadrature_nodes(domain, spec, breakpoints, panels)
        vals = np.asarray(f(nodes))
        w = weights.reshape((-1,) + (1,) * (vals.ndim - 1))
        return np.sum(w * vals, axis=0), np.sum(w * np.abs(vals), axis=0)

    panels = spec.panels
    prev, _ = rule(panels)
    while True:
        panels *= 2
        cur, mag = rule(panels)
        err = np.max(np.abs(cur - prev)) if np.ndim(cur) else abs(cur - prev)
        scale = np.max(mag) if np.ndim(mag) else mag
        if err <= spec.rel_tol * scale or err == 0.0:
            return cur
        if panels * 2 > spec.max_panels:
            raise QuadratureError(
                f"quadrature did not converge with {panels} panels "
                f"(change {err:.3e}, scale {scale:.3e})", previous=prev, current=cur)
        prev = cur


def integrate_scalar(f, domain=ANGLE_DOMAIN, spec: QuadratureSpec = QuadratureSpec(),
                     breakpoints=None):
    value = integrate(f, domain, spec, breakpoints)
    return complex(value) if np.iscomplexobj(value) else float(value)


def integrate_matrix(F, domain=ANGLE_DOMAIN, spec: QuadratureSpec = QuadratureSpec(),
                     breakpoints=None, hermitian: bool = False) -> np.ndarray:
    """Entrywise integral of a matrix-valued ``F``; optionally re-symmetrised."""
    out = np.asarray(integrate(F, domain, spec, breakpoints))
    if hermitian:
        out = hermitian_part(out)
    return out


def hermitian_part(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def _check_hermitian(m: np.ndarray, tol: float = 1e-10):
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise LinAlgError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise LinAlgError("matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(m))))
    if np.max(np.abs(m - m.conj().T)) > tol * scale:
        raise LinAlgError("matrix is not Hermitian")


def hermitian_evd(m: np.ndarray, check: bool = True):
    """Eigen-decomposition with eigenvalues sorted in descending order."""
    if check:
        _check_hermitian(m)
    try:
        vals, vecs = np.linalg.eigh(hermitian_part(np.asarray(m)))
    except np.linalg.LinAlgError as exc:
        raise LinAlgError(str(exc)) from exc
    return vals[::-1], vecs[:, ::-1]


def reduced_svd(m: np.ndarray):
    """Thin SVD ``m = U diag(s) V^H`` returning ``(U, s, V)`` with ``s`` descending."""
    m = np.asarray(m)
    if not np.all(np.isfinite(m)):
        raise LinAlgError("matrix has non-finite entries")
    try:
        u, s, vh = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise LinAlgError(str(exc)) from exc
    return u, s, vh.conj().T


def psd_inv_sqrt(m: np.ndarray) -> np.ndarray:
    """``M^{-1/2}`` of a strictly positive definite Hermitian matrix."""
    vals, vecs = hermitian_evd(m)
    if vals[-1] <= 1e-12 * max(vals[0], 0.0) or vals[0] <= 0:
        raise LinAlgError(
            f"matrix is not positive definite (eigenvalues {vals[-1]:.3e} .. {vals[0]:.3e})")
    return (vecs / np.sqrt(vals)) @ vecs.conj().T


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Hermitian square root of a PSD matrix; tiny negative eigenvalues are clipped."""
    vals, vecs = hermitian_evd(m)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.conj().T


def numerical_rank(m: np.ndarray, tol: float = RANK_TOL) -> int:
    s = np.linalg.svd(np.atleast_2d(m), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def water_filling(gains: Sequence[float], budget: float, noise: float = 1.0) -> np.ndarray:
    """Capacity-achieving power split ``v_i = (nu - noise/h_i)^+`` with ``sum v_i = budget``.

    The water level is bracketed by bisection, which fixes the active set;
    the level is then recomputed in closed form on that set so the budget
    is met to rounding error.
    """
    h = np.asarray(gains, dtype=float).ravel()
    if h.size == 0:
        raise ConfigError("water_filling needs at least one gain")
    if budget <= 0 or noise <= 0:
        raise ConfigError("budget and noise must be > 0")
    if np.all(h <= 0):
        raise ConfigError("water_filling needs at least one positive gain")
    with np.errstate(divide="ignore"):
        floor = np.where(h > 0, noise / h, np.inf)

    def used(nu):
        return np.sum(np.clip(nu - floor, 0.0, None))

    lo = np.min(floor)
    hi = lo + budget
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if used(mid) > budget:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15 * hi:
            break
    active = floor < hi
    nu = (budget + np.sum(floor[active])) / np.count_nonzero(active)
    alloc = np.clip(nu - floor, 0.0, None)
    # rounding can leave an active level marginally negative; renormalise on the support
    alloc *= budget / np.sum(alloc)
    return alloc
