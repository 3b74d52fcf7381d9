"""Small-scale channel synthesis: LOS/NLOS impulse responses, transfer
functions and large-scale fading composition.

Carrier phasors use ``exp(+j 2 pi f_c tau)``; the transfer function uses
``exp(-j 2 pi f tau)`` over baseband frequency offsets ``f``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .evolution import (
    ClusterGenParams,
    ClusterPair,
    EvolutionParams,
    VisibilityMap,
    latent_freq,
    latent_tx,
    realize_visibility,
    spawn_cluster,
)
from .geometry import SPEED_OF_LIGHT, ArrayConfig, MobilityTrack, angles, element_positions
from .lsp import DEFAULT_TRANSFORMS, LSP_NAMES, LspSample, LspTransform, SosField, lsp_at
from .rng import substream

__all__ = [
    "FieldPattern",
    "RayParams",
    "Ray",
    "LsfModel",
    "LinkSetup",
    "ChannelLink",
    "ChannelRealization",
    "GridTooLarge",
    "generate_rays",
    "cir_los",
    "cir_nlos",
    "cir",
    "ctf",
    "synthesize",
    "full_matrix",
    "apply_lsf",
    "path_loss_db",
]


class GridTooLarge(RuntimeError):
    """Requested channel tensor exceeds the configured cell cap."""


@dataclass(frozen=True)
class FieldPattern:
    """Antenna field pattern returning (vertical, horizontal) complex gains.

    ``kind="table"`` interpolates ``v_table``/``h_table`` sampled on the
    ``elevations`` x ``azimuths`` grid (radians); azimuth wraps around.
    """

    kind: str = "isotropic"
    elevations: tuple[float, ...] = ()
    azimuths: tuple[float, ...] = ()
    v_table: tuple[tuple[complex, ...], ...] = ()
    h_table: tuple[tuple[complex, ...], ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in ("isotropic", "short_dipole", "table"):
            raise ValueError(f"unknown pattern kind {self.kind!r}")
        if self.kind == "table":
            shape = (len(self.elevations), len(self.azimuths))
            if np.shape(self.v_table) != shape or np.shape(self.h_table) != shape:
                raise ValueError("pattern tables must be elevations x azimuths")

    def evaluate(self, elevation, azimuth) -> tuple[np.ndarray, np.ndarray]:
        elevation = np.asarray(elevation, dtype=float)
        azimuth = np.asarray(azimuth, dtype=float)
        if self.kind == "isotropic":
            return np.ones(elevation.shape, complex), np.zeros(elevation.shape, complex)
        if self.kind == "short_dipole":
            return np.cos(elevation).astype(complex), np.zeros(elevation.shape, complex)
        return self._interp(self.v_table, elevation, azimuth), self._interp(self.h_table, elevation, azimuth)

    def _interp(self, table, elevation, azimuth):
        az = np.asarray(self.azimuths, dtype=float)
        values = np.asarray(table, dtype=complex)
        # close the azimuth circle for periodic interpolation
        az = np.append(az, az[0] + 2 * np.pi)
        values = np.concatenate([values, values[:, :1]], axis=1)
        wrapped = (azimuth - az[0]) % (2 * np.pi) + az[0]
        pts = np.stack([np.clip(elevation, self.elevations[0], self.elevations[-1]), wrapped], axis=-1)
        grid = (np.asarray(self.elevations, dtype=float), az)
        re = RegularGridInterpolator(grid, values.real)(pts)
        im = RegularGridInterpolator(grid, values.imag)(pts)
        return re + 1j * im


@dataclass(frozen=True)
class RayParams:
    xpr_median_db: float = 9.0
    xpr_sigma_db: float = 3.0


@dataclass(frozen=True)
class Ray:
    aod_azimuth: float
    aod_elevation: float
    aoa_azimuth: float
    aoa_elevation: float
    power: float
    delay: float
    phases: tuple[float, float, float, float]  # VV, VH, HV, HH
    xpr: float
    cluster_id: int = -1


def path_loss_db(distance: float, pl0_db: float = 0.0, exponent: float = 2.0, d0: float = 1.0) -> float:
    """Log-distance path loss."""
    return pl0_db + 10.0 * exponent * np.log10(max(distance, 1e-9) / d0)


@dataclass(frozen=True)
class LsfModel:
    path_loss: float = 0.0
    shadowing: float = 0.0
    blockage: float = 0.0
    absorption: float = 0.0

    @property
    def gain(self) -> float:
        """Linear amplitude gain of the composed large-scale fading."""
        return 10.0 ** (-(self.path_loss + self.shadowing + self.blockage + self.absorption) / 20.0)


@dataclass
class ChannelRealization:
    """Channel tensor with axes (rx element q, tx element p, time, frequency)."""

    ctf: np.ndarray
    times: np.ndarray
    freqs: np.ndarray
    k_factor: np.ndarray = field(default_factory=lambda: np.zeros(0))
    realization: int = 0
    user: int = 0

    @property
    def shape(self) -> tuple[int, ...]:
        return self.ctf.shape

    @property
    def delay_form(self) -> np.ndarray:
        """Resolvable-path form, axes (q, p, time, tap); tap spacing 1 / bandwidth."""
        return np.fft.ifft(self.ctf, axis=-1)

    @classmethod
    def from_delay_form(cls, taps: np.ndarray, times, freqs, **kw) -> "ChannelRealization":
        return cls(np.fft.fft(taps, axis=-1), np.asarray(times), np.asarray(freqs), **kw)

    def snapshot(self, t: int = 0, b: int = 0) -> np.ndarray:
        """Narrowband (Q, P) matrix at one time/frequency sample."""
        return self.ctf[:, :, t, b]


def apply_lsf(channel: ChannelRealization, lsf: LsfModel) -> ChannelRealization:
    return replace(channel, ctf=channel.ctf * lsf.gain)


def ctf(taps: Sequence[tuple[complex, float]], f) -> np.ndarray | complex:
    """Transfer function of a tap list ``[(amplitude, delay), ...]`` at ``f``."""
    f = np.asarray(f, dtype=float)
    if not len(taps):
        return np.zeros(f.shape, complex) if f.ndim else 0j
    amp = np.array([a for a, _ in taps], dtype=complex)
    tau = np.array([d for _, d in taps], dtype=float)
    out = np.exp(-2j * np.pi * f[..., None] * tau) @ amp
    return complex(out) if f.ndim == 0 else out


# --------------------------------------------------------------------------- rays


def _ray_randoms(rng: np.random.Generator, count: int, params: RayParams):
    phases = rng.uniform(0.0, 2 * np.pi, (count, 4))
    xpr_db = params.xpr_median_db + params.xpr_sigma_db * rng.standard_normal(count)
    return phases, 10.0 ** (xpr_db / 10.0)


def generate_rays(
    clusters: Sequence[ClusterPair],
    tx_pos,
    rx_pos,
    rng: np.random.Generator,
    params: RayParams = RayParams(),
    time: float = 0.0,
) -> list[Ray]:
    """Rays of ``clusters`` seen from ``tx_pos``/``rx_pos`` at ``time``.

    Per-ray power is cluster power / M_n; the total over all clusters is 1.
    """
    tx_pos = np.asarray(tx_pos, dtype=float)
    rx_pos = np.asarray(rx_pos, dtype=float)
    total = sum(c.mean_power for c in clusters)
    rays = []
    for c in clusters:
        a = c.positions_a(time)[0]
        z = c.positions_z(time)[0]
        aod_az, aod_el = angles(tx_pos, a)
        aoa_az, aoa_el = angles(rx_pos, z)
        delay = (np.linalg.norm(a - tx_pos, axis=1) + np.linalg.norm(z - rx_pos, axis=1)) / SPEED_OF_LIGHT + c.virtual_delay
        phases, xpr = _ray_randoms(rng, c.ray_count, params)
        power = c.mean_power / c.ray_count / total if total > 0 else 0.0
        for m in range(c.ray_count):
            rays.append(
                Ray(float(aod_az[m]), float(aod_el[m]), float(aoa_az[m]), float(aoa_el[m]), float(power),
                    float(delay[m]), tuple(float(x) for x in phases[m]), float(xpr[m]), c.id)
            )
    return rays


# --------------------------------------------------------------------------- links


@dataclass
class LinkSetup:
    """Everything needed to synthesise one Tx -> Rx link."""

    carrier_hz: float
    tx_array: ArrayConfig
    rx_array: ArrayConfig
    tx_track: MobilityTrack
    rx_track: MobilityTrack
    times: np.ndarray
    freqs: np.ndarray
    evolution: EvolutionParams = field(default_factory=EvolutionParams)
    clusters: ClusterGenParams = field(default_factory=ClusterGenParams)
    rays: RayParams = field(default_factory=RayParams)
    tx_pattern: FieldPattern = field(default_factory=FieldPattern)
    rx_pattern: FieldPattern = field(default_factory=FieldPattern)
    lsp_fields: Mapping[str, SosField] | None = None
    lsp_transforms: Mapping[str, LspTransform] = field(default_factory=lambda: dict(DEFAULT_TRANSFORMS))
    mode: str = "rician"
    slots: int = 128

    def __post_init__(self) -> None:
        self.times = np.atleast_1d(np.asarray(self.times, dtype=float))
        self.freqs = np.atleast_1d(np.asarray(self.freqs, dtype=float))
        if self.mode not in ("rician", "los_only", "nlos_only"):
            raise ValueError(f"unknown channel mode {self.mode!r}")
        if self.lsp_fields is None:
            self.lsp_fields = {name: SosField.zero() for name in LSP_NAMES}

    @property
    def cell_count(self) -> int:
        return self.rx_array.element_count * self.tx_array.element_count * len(self.times) * len(self.freqs)


class ChannelLink:
    """One realised link: geometry, cluster population, rays and phases."""

    def __init__(self, setup: LinkSetup, seed: int, realization: int = 0, user: int = 0, clusters: Sequence[ClusterPair] | None = None):
        """``clusters`` replaces the birth-death population with fixed clusters
        visible in every cell (useful for oracles and fixtures)."""
        self.setup = setup
        self.realization = realization
        self.user = user
        s = setup
        self.tx_pos = element_positions(s.tx_array, s.tx_track, s.times)  # (T, P, 3)
        self.rx_pos = element_positions(s.rx_array, s.rx_track, s.times)  # (T, Q, 3)
        tx_ref = self.tx_pos[:, 0]
        rx_ref = self.rx_pos[:, 0]
        self.lsp = lsp_at(s.lsp_fields, tx_ref, rx_ref, s.lsp_transforms)  # arrays over time
        if s.mode == "los_only":
            self.k_factor = np.full(len(s.times), np.inf)
        elif s.mode == "nlos_only":
            self.k_factor = np.zeros(len(s.times))
        else:
            self.k_factor = np.asarray(self.lsp.k_factor, dtype=float) * np.ones(len(s.times))

        ev = s.evolution
        if clusters is not None:
            self._fixed_population(list(clusters), seed)
            return
        self.visibility, births = realize_visibility(
            latent_tx(s.tx_array, s.tx_track, s.times, ev),
            latent_tx(s.rx_array, s.rx_track, s.times, ev),
            latent_freq(s.freqs, ev),
            ev,
            substream(seed, "visibility", realization, user),
            slots=s.slots,
        )
        crng = substream(seed, "clusters", realization, user)
        self.clusters: list[ClusterPair] = []
        for cid, (t, p, q, b) in zip(self.visibility.ids, births):
            lsp_t = LspSample(**{k: float(np.atleast_1d(getattr(self.lsp, k))[t]) for k in LSP_NAMES})
            c = spawn_cluster(int(cid), crng, tx_ref[t], rx_ref[t], s.clusters, lsp_t, (float(s.times[t]), p, b))
            self.clusters.append(c)

        self._finish(seed)

    def _fixed_population(self, clusters: list[ClusterPair], seed: int) -> None:
        s = self.setup
        n, T = len(clusters), len(s.times)
        P, Q = s.tx_array.element_count, s.rx_array.element_count
        self.visibility = VisibilityMap(
            np.array([c.id for c in clusters], dtype=int),
            np.ones((n, T, P), bool), np.ones((n, T, Q), bool), np.ones((n, len(s.freqs)), bool),
        )
        self.clusters = clusters
        self._finish(seed)

    def _finish(self, seed: int) -> None:
        s, realization, user = self.setup, self.realization, self.user
        rrng = substream(seed, "rays", realization, user)
        counts = np.array([c.ray_count for c in self.clusters], dtype=int)
        self.ray_cluster = np.repeat(np.arange(len(self.clusters)), counts)
        self.ray_phases, self.ray_xpr = _ray_randoms(rrng, int(counts.sum()), s.rays)
        self.cluster_power = np.array([c.mean_power for c in self.clusters], dtype=float)
        self.ray_power = (self.cluster_power / np.maximum(counts, 1))[self.ray_cluster] if len(counts) else np.zeros(0)
        self.los_phases = substream(seed, "los", realization, user).uniform(0.0, 2 * np.pi, 2)
        # scatterer positions over the whole time grid, (T, R, 3)
        if self.clusters:
            self.ray_a = np.concatenate([c.positions_a(s.times) for c in self.clusters], axis=1)
            self.ray_z = np.concatenate([c.positions_z(s.times) for c in self.clusters], axis=1)
        else:
            self.ray_a = self.ray_z = np.zeros((len(s.times), 0, 3))
        self.ray_virtual = np.array([c.virtual_delay for c in self.clusters])[self.ray_cluster] if self.clusters else np.zeros(0)

    # -- per-time building blocks -------------------------------------------------

    def los_terms(self, t) -> tuple[np.ndarray, np.ndarray]:
        """LOS amplitude and delay, shaped (Q, P), or (T', Q, P) for an index array."""
        s = self.setup
        ts = np.atleast_1d(t)
        tx = self.tx_pos[ts][:, None, :, :]
        rx = self.rx_pos[ts][:, :, None, :]
        tau = np.linalg.norm(rx - tx, axis=-1) / SPEED_OF_LIGHT
        aod_az, aod_el = angles(tx, rx)
        aoa_az, aoa_el = angles(rx, tx)
        tv, th = s.tx_pattern.evaluate(aod_el, aod_az)
        rv, rh = s.rx_pattern.evaluate(aoa_el, aoa_az)
        vv, hh = np.exp(1j * self.los_phases)
        gain = rv * vv * tv - rh * hh * th
        amp = gain * np.exp(2j * np.pi * s.carrier_hz * tau)
        return (amp[0], tau[0]) if np.ndim(t) == 0 else (amp, tau)

    def ray_terms(self, t, rays: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Unit-power NLOS ray amplitudes (without sqrt(P)) and delays, shaped
        (Q, P, R), or (T', Q, P, R) for an index array."""
        s = self.setup
        if rays is None:
            rays = np.arange(len(self.ray_cluster))
        ts = np.atleast_1d(t)
        a = self.ray_a[ts][:, rays][:, None]  # (T', 1, R, 3)
        z = self.ray_z[ts][:, rays][:, None]
        vd = self.ray_virtual[rays]
        tx = self.tx_pos[ts][:, :, None, :]  # (T', P, 1, 3)
        rx = self.rx_pos[ts][:, :, None, :]  # (T', Q, 1, 3)
        d_tx = np.linalg.norm(tx - a, axis=-1)  # (T', P, R)
        d_rx = np.linalg.norm(rx - z, axis=-1)  # (T', Q, R)
        tau = (d_tx[:, None] + d_rx[:, :, None]) / SPEED_OF_LIGHT + vd
        aod_az, aod_el = angles(tx, a)
        aoa_az, aoa_el = angles(rx, z)
        tv, th = s.tx_pattern.evaluate(aod_el, aod_az)  # (T', P, R)
        rv, rh = s.rx_pattern.evaluate(aoa_el, aoa_az)  # (T', Q, R)
        ph = np.exp(1j * self.ray_phases[rays])
        leak = 1.0 / np.sqrt(self.ray_xpr[rays])
        m_vv, m_vh, m_hv, m_hh = ph[:, 0], leak * ph[:, 1], leak * ph[:, 2], ph[:, 3]
        tv, th = tv[:, None], th[:, None]
        rv, rh = rv[:, :, None], rh[:, :, None]
        gain = rv * (m_vv * tv + m_vh * th) + rh * (m_hv * tv + m_hh * th)
        amp = gain * np.exp(2j * np.pi * s.carrier_hz * tau)
        return (amp[0], tau[0]) if np.ndim(t) == 0 else (amp, tau)

    def ray_weights(self, t, b: int | slice = slice(None)) -> tuple[np.ndarray, np.ndarray]:
        """sqrt of normalised ray powers, shaped (Q, P, B, R) (leading T' axis
        for an index array), and the rays involved.

        Powers are normalised over the clusters visible in each (q, p, t, b)
        cell; a cell without clusters gets zero NLOS power.
        """
        v = self.visibility
        ts = np.atleast_1d(t)
        fr = v.freq[:, b]
        if fr.ndim == 1:
            fr = fr[:, None]
        vis = v.rx[:, ts, :, None, None] & v.tx[:, ts, None, :, None] & fr[:, None, None, None, :]  # (N, T', Q, P, B)
        if np.ndim(t) == 0:
            alive = np.flatnonzero(vis.any(axis=(1, 2, 3, 4)))
            rays = np.flatnonzero(np.isin(self.ray_cluster, alive))
        else:
            alive = np.arange(len(self.clusters))
            rays = np.arange(len(self.ray_cluster))
        denom = np.tensordot(self.cluster_power[alive], vis[alive].astype(float), axes=(0, 0))  # (T', Q, P, B)
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = np.where(denom > 0, 1.0 / denom, 0.0)
        w = np.sqrt(self.ray_power[rays][:, None, None, None, None] * frac[None] * vis[self.ray_cluster[rays]])
        w = np.moveaxis(w, 0, -1)
        return (w[0], rays) if np.ndim(t) == 0 else (w, rays)

    def _k_weights(self, t):
        k = np.asarray(self.k_factor[t], dtype=float)
        with np.errstate(invalid="ignore"):
            wl = np.where(np.isinf(k), 1.0, np.sqrt(k / (k + 1.0)))
            wn = np.where(np.isinf(k), 0.0, np.sqrt(1.0 / (k + 1.0)))
        return (float(wl), float(wn)) if np.ndim(t) == 0 else (wl, wn)

    # -- spec-level operations -------------------------------------------------------

    def cir_los(self, p: int, q: int, t: int) -> tuple[complex, float]:
        amp, tau = self.los_terms(t)
        return complex(amp[q, p]), float(tau[q, p])

    def cir_nlos(self, p: int, q: int, t: int, b: int = 0) -> list[tuple[complex, float]]:
        w, rays = self.ray_weights(t, slice(b, b + 1))
        amp, tau = self.ray_terms(t, rays)
        a = w[q, p, 0] * amp[q, p]
        keep = w[q, p, 0] > 0
        return [(complex(x), float(d)) for x, d in zip(a[keep], tau[q, p][keep])]

    def cir(self, p: int, q: int, t: int, b: int = 0) -> list[tuple[complex, float]]:
        """Tap list of the composed (Rician) impulse response at one cell."""
        wl, wn = self._k_weights(t)
        taps = []
        if wl > 0:
            a, d = self.cir_los(p, q, t)
            taps.append((wl * a, d))
        if wn > 0:
            taps.extend((wn * a, d) for a, d in self.cir_nlos(p, q, t, b))
        return taps

    def ctf_block(self, ts: np.ndarray) -> np.ndarray:
        """Transfer function at time indices ``ts``, shaped (T', Q, P, B)."""
        f = self.setup.freqs
        wl, wn = self._k_weights(ts)
        los_amp, los_tau = self.los_terms(ts)
        out = wl[:, None, None, None] * los_amp[..., None] * np.exp(-2j * np.pi * los_tau[..., None] * f)
        if np.any(wn > 0) and len(self.ray_cluster):
            w, rays = self.ray_weights(ts)
            amp, tau = self.ray_terms(ts, rays)
            amp = amp * wn[:, None, None, None]
            step = max(1, int(4e6 // max(1, tau.size)))
            for b0 in range(0, len(f), step):
                fb = f[b0:b0 + step]
                phase = np.exp(-2j * np.pi * tau[..., None, :] * fb[:, None])  # (T', Q, P, b, R)
                out[..., b0:b0 + step] += np.einsum("tqpbr,tqpr,tqpbr->tqpb", w[..., b0:b0 + step, :], amp, phase)
        return out

    def ctf_at(self, t: int) -> np.ndarray:
        """Transfer function at time index ``t``, shaped (Q, P, B)."""
        return self.ctf_block(np.array([t]))[0]

    def realize(self) -> ChannelRealization:
        s = self.setup
        T = len(s.times)
        cells = max(1, self.setup.cell_count // T * max(1, len(self.ray_cluster)))
        block = int(np.clip(4e6 // cells, 1, T))
        parts = [self.ctf_block(np.arange(t0, min(T, t0 + block))) for t0 in range(0, T, block)]
        h = np.moveaxis(np.concatenate(parts, axis=0), 0, 2)
        return ChannelRealization(h, s.times.copy(), s.freqs.copy(), self.k_factor.copy(), self.realization, self.user)


def synthesize(setup: LinkSetup, seed: int, realization: int = 0, user: int = 0, max_cells: float = 5e7) -> ChannelRealization:
    if setup.cell_count > max_cells:
        raise GridTooLarge(f"channel tensor of {setup.cell_count} cells exceeds cap {int(max_cells)}")
    return ChannelLink(setup, seed, realization, user).realize()


def full_matrix(config, realization: int = 0, user: int = 0) -> ChannelRealization:
    """Small-scale channel tensor of one realization of a scenario config."""
    setup = config.link_setup(realization, user)
    return synthesize(setup, config.seed, realization, user, config.max_grid_cells)


def cir_los(link: ChannelLink, p: int, q: int, t: int) -> tuple[complex, float]:
    return link.cir_los(p, q, t)


def cir_nlos(link: ChannelLink, p: int, q: int, t: int, b: int = 0) -> list[tuple[complex, float]]:
    return link.cir_nlos(p, q, t, b)


def cir(link: ChannelLink, p: int, q: int, t: int, b: int = 0) -> list[tuple[complex, float]]:
    return link.cir(p, q, t, b)
