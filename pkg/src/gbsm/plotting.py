"""Figure rendering for run reports. Files only; no interactive backends."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .statistics import StatResult  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "gbsm",
}


def figure(width: float = 5.0, height: float | None = None):
    """Figure with report defaults; height defaults to the golden ratio."""
    plt.rcParams.update(STYLE)
    if height is None:
        height = width * (math.sqrt(5.0) - 1.0) / 2.0
    return plt.subplots(figsize=(width, height))


def save(fig, path) -> Path:
    # fixed metadata keeps PNG bytes reproducible
    path = Path(path)
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


_UNITS = {"dt_s": ("Time lag (ms)", 1e3), "df_hz": ("Frequency lag (MHz)", 1e-6), "dtx_m": ("Antenna spacing (m)", 1.0), "drx_m": ("Antenna spacing (m)", 1.0)}


def plot_correlation(results: Mapping[str, StatResult], path, title: str = "") -> Path:
    fig, ax = figure()
    axis = next(iter(results.values())).axes[0]
    label, scale = _UNITS.get(axis, ("Lag", 1.0))
    for name, res in results.items():
        ax.plot(np.asarray(res.lags) * scale, np.abs(res.values), label=name)
    ax.axhline(0.5, color="k", lw=0.6, ls=":")
    ax.set_xlabel(label)
    ax.set_ylabel("Absolute correlation")
    ax.set_ylim(0, 1.05)
    ax.set_title(title)
    if len(results) > 1:
        ax.legend()
    return save(fig, path)


def plot_cdf(curves: Mapping[str, tuple[np.ndarray, np.ndarray]], path, xlabel: str, title: str = "") -> Path:
    fig, ax = figure()
    for name, (x, p) in curves.items():
        ax.step(x, p, where="post", label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("CDF")
    ax.set_ylim(0, 1.02)
    ax.set_title(title)
    ax.legend()
    return save(fig, path)


def plot_lines(x, curves: Mapping[str, np.ndarray], path, xlabel: str, ylabel: str, title: str = "") -> Path:
    fig, ax = figure()
    for name, y in curves.items():
        ax.plot(x, y, marker="o", label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend()
    return save(fig, path)


def plot_map(x, y, values, path, label: str, title: str = "") -> Path:
    fig, ax = figure(5.0, 4.2)
    mesh = ax.pcolormesh(x, y, values, shading="auto", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label=label)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_aspect("equal")
    ax.set_title(title)
    return save(fig, path)


def plot_evolution(axis_values, mask: np.ndarray, path, xlabel: str, title: str = "") -> Path:
    """Cluster presence (rows: cluster ids, columns: axis samples)."""
    fig, ax = figure()
    ids = np.arange(mask.shape[0])
    ax.pcolormesh(axis_values, ids, mask.astype(float), shading="nearest", cmap="Greys", vmin=0, vmax=1)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("Cluster index")
    ax.set_title(title)
    ax.grid(False)
    return save(fig, path)


def plot_channel(times, freqs, magnitude: np.ndarray, path, title: str = "") -> Path:
    fig, ax = figure()
    if magnitude.shape[1] > 1 and magnitude.shape[0] > 1:
        mesh = ax.pcolormesh(np.asarray(freqs) * 1e-6, np.asarray(times) * 1e3, 20 * np.log10(magnitude + 1e-300), shading="auto")
        fig.colorbar(mesh, ax=ax, label="|H| (dB)")
        ax.set_xlabel("Frequency offset (MHz)")
        ax.set_ylabel("Time (ms)")
        ax.grid(False)
    elif magnitude.shape[1] > 1:
        ax.plot(np.asarray(freqs) * 1e-6, 20 * np.log10(magnitude[0] + 1e-300))
        ax.set_xlabel("Frequency offset (MHz)")
        ax.set_ylabel("|H| (dB)")
    else:
        ax.plot(np.asarray(times) * 1e3, 20 * np.log10(magnitude[:, 0] + 1e-300))
        ax.set_xlabel("Time (ms)")
        ax.set_ylabel("|H| (dB)")
    ax.set_title(title)
    return save(fig, path)
