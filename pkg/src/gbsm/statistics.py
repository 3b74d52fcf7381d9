"""Ensemble correlation estimators and coherence scales.

Every estimator funnels through :func:`_correlate`, so restricting the
space-time-frequency estimator to one axis reproduces the dedicated
single-axis estimator exactly. Sums use ``math.fsum`` and are therefore
independent of realization order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import ChannelRealization

__all__ = ["StatResult", "stfcf", "temporal_acf", "space_ccf", "fcf", "coherence_scale", "NOT_REACHED"]

NOT_REACHED = None


@dataclass(frozen=True)
class StatResult:
    """Correlation values against physical lags.

    ``lags`` is (L,) for single-axis results or (L, k) with one column per
    axis listed in ``axes``.
    """

    lags: np.ndarray
    values: np.ndarray
    normalization: str
    realization_count: int
    axes: tuple[str, ...] = ("lag",)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)


def _stack(ensemble) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(ensemble, np.ndarray):
        arr = ensemble
        times = np.arange(arr.shape[3], dtype=float)
        freqs = np.arange(arr.shape[4], dtype=float)
    else:
        items = list(ensemble)
        if not items:
            raise ValueError("empty ensemble")
        arr = np.stack([r.ctf for r in items])
        times, freqs = items[0].times, items[0].freqs
    if arr.ndim != 5:
        raise ValueError("ensemble must have axes (realization, q, p, t, f)")
    if arr.shape[0] < 2:
        raise ValueError("ensemble size must be at least 2")
    return arr, np.asarray(times, dtype=float), np.asarray(freqs, dtype=float)


def _correlate(arr: np.ndarray, anchor: tuple[int, int, int, int], offsets: np.ndarray, normalize: bool) -> np.ndarray:
    """Sample E[H(anchor) H*(anchor + offset)] for offsets (L, 4) in (q, p, t, f) index order."""
    R = arr.shape[0]
    idx = np.asarray(anchor)[None, :] + offsets
    shape = np.asarray(arr.shape[1:])
    if np.any(idx < 0) or np.any(idx >= shape):
        raise ValueError("lag outside simulated grid")
    a = arr[:, anchor[0], anchor[1], anchor[2], anchor[3]]
    b = arr[:, idx[:, 0], idx[:, 1], idx[:, 2], idx[:, 3]]  # (R, L)
    prod = a[:, None] * np.conj(b)
    pa = math.fsum(np.abs(a) ** 2) / R
    out = np.empty(len(offsets), dtype=complex)
    for j in range(len(offsets)):
        v = complex(math.fsum(prod[:, j].real) / R, math.fsum(prod[:, j].imag) / R)
        if normalize:
            pb = math.fsum(np.abs(b[:, j]) ** 2) / R
            den = math.sqrt(pa * pb)
            v = v / den if den > 0 else complex("nan")
        out[j] = v
    return out


def _lags(lags, size: int, start: int) -> np.ndarray:
    if lags is None:
        return np.arange(size - start)
    return np.asarray(lags, dtype=int).reshape(-1)


def stfcf(
    ensemble,
    dt_lags: Sequence[int] = (0,),
    df_lags: Sequence[int] = (0,),
    tx_lags: Sequence[int] = (0,),
    rx_lags: Sequence[int] = (0,),
    anchor: tuple[int, int, int, int] = (0, 0, 0, 0),
    tx_spacing: float = 1.0,
    rx_spacing: float = 1.0,
    normalize: bool = True,
) -> StatResult:
    """Space-time-frequency correlation over the product of index-lag grids.

    ``anchor`` is (q, p, t, f). Physical lags are seconds, Hz, and metres
    (element offset times spacing).
    """
    arr, times, freqs = _stack(ensemble)
    grids = np.meshgrid(np.asarray(rx_lags, int), np.asarray(tx_lags, int), np.asarray(dt_lags, int), np.asarray(df_lags, int), indexing="ij")
    offsets = np.stack([g.reshape(-1) for g in grids], axis=1)
    values = _correlate(arr, anchor, offsets, normalize)
    t_step = times[1] - times[0] if len(times) > 1 else 0.0
    f_step = freqs[1] - freqs[0] if len(freqs) > 1 else 0.0
    phys = np.stack([offsets[:, 2] * t_step, offsets[:, 3] * f_step, offsets[:, 1] * tx_spacing, offsets[:, 0] * rx_spacing], axis=1)
    return StatResult(phys, values, "unit_at_zero" if normalize else "none", arr.shape[0], ("dt_s", "df_hz", "dtx_m", "drx_m"))


def _single(result: StatResult, column: int, axis: str) -> StatResult:
    return StatResult(result.lags[:, column].copy(), result.values, result.normalization, result.realization_count, (axis,))


def temporal_acf(ensemble, lags=None, anchor=(0, 0, 0, 0), normalize: bool = True) -> StatResult:
    arr, _, _ = _stack(ensemble)
    lags = _lags(lags, arr.shape[3], anchor[2])
    return _single(stfcf(ensemble, dt_lags=lags, anchor=anchor, normalize=normalize), 0, "dt_s")


def fcf(ensemble, lags=None, anchor=(0, 0, 0, 0), normalize: bool = True) -> StatResult:
    arr, _, _ = _stack(ensemble)
    lags = _lags(lags, arr.shape[4], anchor[3])
    return _single(stfcf(ensemble, df_lags=lags, anchor=anchor, normalize=normalize), 1, "df_hz")


def space_ccf(
    ensemble,
    tx_lags=None,
    rx_lags=(0,),
    tx_spacing: float = 1.0,
    rx_spacing: float = 1.0,
    anchor=(0, 0, 0, 0),
    normalize: bool = True,
) -> StatResult:
    """Spatial correlation anchored at element (q, p) of ``anchor``.

    One-dimensional over Tx spacing when ``rx_lags`` is ``(0,)``; otherwise
    the lags carry (dtx_m, drx_m) columns.
    """
    arr, _, _ = _stack(ensemble)
    tx_lags = _lags(tx_lags, arr.shape[2], anchor[1])
    res = stfcf(ensemble, tx_lags=tx_lags, rx_lags=rx_lags, anchor=anchor, tx_spacing=tx_spacing, rx_spacing=rx_spacing, normalize=normalize)
    if len(np.asarray(rx_lags).reshape(-1)) == 1:
        return _single(res, 2, "dtx_m")
    return StatResult(res.lags[:, 2:].copy(), res.values, res.normalization, res.realization_count, ("dtx_m", "drx_m"))


def coherence_scale(result: StatResult, threshold: float = 0.5) -> float | None:
    """First lag where |value| falls to ``threshold``; ``None`` if never reached."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    lags = np.asarray(result.lags, dtype=float)
    if lags.ndim != 1:
        raise ValueError("coherence scale needs a single-axis result")
    mag = np.abs(np.asarray(result.values))
    for i in range(len(mag)):
        if mag[i] <= threshold:
            if i == 0:
                return float(lags[0])
            m0, m1 = mag[i - 1], mag[i]
            frac = (m0 - threshold) / (m0 - m1)
            return float(lags[i - 1] + frac * (lags[i] - lags[i - 1]))
    return NOT_REACHED
