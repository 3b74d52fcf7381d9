"""Singular value spread, Shannon capacity and empirical CDFs."""

from __future__ import annotations

import math

import numpy as np

__all__ = ["svs", "svs_db", "capacity", "cdf", "INFINITE_SPREAD"]

INFINITE_SPREAD = math.inf


def _matrix(h) -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2:
        raise ValueError("expected a 2-D channel matrix")
    if not np.all(np.isfinite(h)):
        raise ValueError("channel matrix has non-finite entries")
    return h


def svs(h) -> float:
    """max/min singular value of a K x M matrix (K <= M)."""
    h = _matrix(h)
    if h.shape[0] > h.shape[1]:
        raise ValueError("svs expects K <= M (users by antennas)")
    s = np.linalg.svd(h, compute_uv=False)
    if s[0] == 0:
        raise ValueError("zero matrix has no singular value spread")
    if s[-1] < 1e-12 * s[0]:
        return INFINITE_SPREAD
    return float(s[0] / s[-1])


def svs_db(h) -> float:
    return 20.0 * math.log10(svs(h))


def capacity(h, snr: float) -> float:
    """log2 det(I + snr / M_T * H H^H) for an M_R x M_T matrix, bits/s/Hz."""
    h = _matrix(h)
    if snr < 0:
        raise ValueError("snr must be non-negative")
    m_r, m_t = h.shape
    g = np.eye(m_r) + (snr / m_t) * (h @ h.conj().T)
    sign, logdet = np.linalg.slogdet(g)
    return float(logdet / math.log(2.0))


def cdf(values) -> tuple[np.ndarray, np.ndarray]:
    """Right-continuous empirical CDF as (distinct sorted values, P(X <= value))."""
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size == 0:
        raise ValueError("cdf of empty input")
    uniq, counts = np.unique(v, return_counts=True)
    return uniq, np.cumsum(counts) / v.size
