"""Input checks shared by the estimator classes."""
from __future__ import annotations

import numpy as np

from .exceptions import ConfigError

__all__ = ["check_channel", "check_covariance", "check_waveform", "check_echo_stack",
           "check_rate_target"]


def _finite_complex(a, name, ndim):
    try:
        a = np.asarray(a, dtype=complex)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be numeric") from exc
    if a.ndim != ndim:
        raise ConfigError(f"{name} must be {ndim}-D, got shape {a.shape}")
    if a.size == 0:
        raise ConfigError(f"{name} is empty")
    if not np.all(np.isfinite(a)):
        raise ConfigError(f"{name} has non-finite entries")
    return a


def check_channel(h, n_tx: int) -> np.ndarray:
    """2-D finite channel with ``n_tx`` columns; a 1-D input is one user antenna."""
    h = np.asarray(h)
    if h.ndim == 1:
        h = h[None, :]
    h = _finite_complex(h, "channel", 2)
    if h.shape[1] != n_tx:
        raise ConfigError(f"channel has {h.shape[1]} columns, expected n_tx={n_tx}")
    if not np.any(h):
        raise ConfigError("channel is zero")
    return h


def check_covariance(w, power=None, tol: float = 1e-9) -> np.ndarray:
    """Hermitian PSD matrix, optionally within a trace budget."""
    w = _finite_complex(w, "covariance", 2)
    if w.shape[0] != w.shape[1]:
        raise ConfigError(f"covariance must be square, got {w.shape}")
    scale = max(1.0, float(np.max(np.abs(w))))
    if np.max(np.abs(w - w.conj().T)) > 1e-10 * scale:
        raise ConfigError("covariance is not Hermitian")
    vals = np.linalg.eigvalsh(0.5 * (w + w.conj().T))
    if vals[0] < -tol * max(vals[-1], 0.0) - 1e-300:
        raise ConfigError(f"covariance is not PSD (min eigenvalue {vals[0]:.3e})")
    if power is not None and np.trace(w).real > power + tol:
        raise ConfigError(f"covariance trace {np.trace(w).real:.6g} exceeds budget {power:.6g}")
    return w


def check_waveform(x, n_tx: int) -> np.ndarray:
    x = _finite_complex(x, "waveform", 2)
    if x.shape[0] != n_tx:
        raise ConfigError(f"waveform has {x.shape[0]} rows, expected n_tx={n_tx}")
    return x


def check_echo_stack(y, n_rx: int, symbols: int) -> np.ndarray:
    """Stack of echo blocks with shape ``(n_samples, n_rx, symbols)``."""
    y = np.asarray(y)
    if y.ndim == 2:
        y = y[None]
    y = _finite_complex(y, "echoes", 3)
    if y.shape[1:] != (n_rx, symbols):
        raise ConfigError(f"echo blocks have shape {y.shape[1:]}, expected ({n_rx}, {symbols})")
    return y


def check_rate_target(rbar) -> float:
    try:
        rbar = float(rbar)
    except (TypeError, ValueError) as exc:
        raise ConfigError("rate target must be a number") from exc
    if not np.isfinite(rbar) or rbar < 0:
        raise ConfigError(f"rate target must be finite and >= 0, got {rbar!r}")
    return rbar
