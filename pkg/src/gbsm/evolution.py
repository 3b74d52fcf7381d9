"""Birth-death evolution of twin clusters over array elements, time and frequency.

Two realisations of the same process live here:

* :func:`evolve` is the step-wise operator: Bernoulli survival of every
  visible cluster plus Poisson births with the closed-form mean.
* :func:`realize_visibility` builds the visibility of a whole
  (time, Tx element, Rx element, frequency bin) grid at once. Each side maps
  its cells to a latent plane ``eps1 * u(beta_A) + eps2 * u(alpha_A)`` in which
  survival is ``exp(-lambda_R * |distance|)``; frequency maps to the line
  ``F(f - f_0) / D_c^f``. Cluster lifetimes are cells of independent Poisson
  line (point) processes with cut intensity ``lambda_R``, so the fraction of
  clusters shared by *any* two grid cells equals the product of the three
  survival probabilities, and births per step are Poisson with mean
  ``lambda_G / lambda_R * (1 - P)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .geometry import SPEED_OF_LIGHT, ArrayConfig, MobilityTrack, angles, direction

__all__ = [
    "EvolutionParams",
    "ClusterGenParams",
    "ClusterPair",
    "ClusterRegistry",
    "VisibilityMap",
    "survival_prob_tx",
    "survival_prob_rx",
    "survival_prob_freq",
    "survival_prob_total",
    "expected_new_clusters",
    "evolve",
    "evolve_chain",
    "latent_tx",
    "latent_freq",
    "realize_visibility",
    "spawn_cluster",
    "pdp_power",
]


@dataclass(frozen=True)
class EvolutionParams:
    lambda_g: float = 20.0
    lambda_r: float = 1.0
    dc_array: float = 40.0
    dc_time: float = 40.0
    dc_freq: float = 1e4
    freq_shape: str = "sqrt"

    def __post_init__(self) -> None:
        for name in ("lambda_g", "lambda_r", "dc_array", "dc_time", "dc_freq"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.freq_shape not in ("sqrt", "linear"):
            raise ValueError("freq_shape must be 'sqrt' or 'linear'")

    @property
    def mean_count(self) -> float:
        return self.lambda_g / self.lambda_r

    def freq_profile(self, df):
        df = np.asarray(df, dtype=float)
        return np.sqrt(df) if self.freq_shape == "sqrt" else df


def _side_survival(params: EvolutionParams, dt, delta, v, alpha_a, beta_a, beta_e):
    e1 = np.asarray(delta, dtype=float) * np.cos(beta_e) / params.dc_array
    e2 = np.asarray(v, dtype=float) * np.asarray(dt, dtype=float) / params.dc_time
    arg = e1**2 + e2**2 + 2.0 * e1 * e2 * np.cos(np.asarray(alpha_a) - np.asarray(beta_a))
    out = np.exp(-params.lambda_r * np.sqrt(np.maximum(arg, 0.0)))
    return float(out) if np.ndim(out) == 0 else out


def survival_prob_tx(params: EvolutionParams, dt, delta_p, v_t=0.0, alpha_a_t=0.0, beta_a_t=0.0, beta_e_t=0.0):
    """Probability that a Tx-side cluster survives a time step ``dt`` and an
    array displacement ``delta_p`` (meters from the reference element)."""
    return _side_survival(params, dt, delta_p, v_t, alpha_a_t, beta_a_t, beta_e_t)


def survival_prob_rx(params: EvolutionParams, dt, delta_q, v_r=0.0, alpha_a_r=0.0, beta_a_r=0.0, beta_e_r=0.0):
    return _side_survival(params, dt, delta_q, v_r, alpha_a_r, beta_a_r, beta_e_r)


def survival_prob_freq(params: EvolutionParams, df):
    if np.any(np.asarray(df) < 0):
        raise ValueError("frequency separation must be non-negative")
    out = np.exp(-params.lambda_r * params.freq_profile(df) / params.dc_freq)
    return float(out) if np.ndim(out) == 0 else out


def survival_prob_total(
    params: EvolutionParams,
    dt,
    delta_p,
    delta_q,
    df,
    *,
    v_t=0.0,
    alpha_a_t=0.0,
    beta_a_t=0.0,
    beta_e_t=0.0,
    v_r=0.0,
    alpha_a_r=0.0,
    beta_a_r=0.0,
    beta_e_r=0.0,
):
    # The time term appears on both sides of the product, as in the closed form.
    return (
        survival_prob_tx(params, dt, delta_p, v_t, alpha_a_t, beta_a_t, beta_e_t)
        * survival_prob_rx(params, dt, delta_q, v_r, alpha_a_r, beta_a_r, beta_e_r)
        * survival_prob_freq(params, df)
    )


def expected_new_clusters(params: EvolutionParams, p_survival):
    p = np.asarray(p_survival, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("survival probability must lie in [0, 1]")
    out = params.lambda_g / params.lambda_r * (1.0 - p)
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------- clusters


@dataclass(frozen=True)
class ClusterGenParams:
    """Distributions used to initialise a newborn twin cluster."""

    rays_per_cluster_mean: float = 20.0
    distance_mean: float = 30.0
    distance_min: float = 5.0
    azimuth_std: float = np.deg2rad(30.0)
    elevation_std: float = np.deg2rad(5.0)
    virtual_delay_mean: float = 20e-9
    delay_scaling: float = 2.3
    shadowing_db: float = 3.0
    speed: float = 0.0

    def __post_init__(self) -> None:
        if self.rays_per_cluster_mean < 1:
            raise ValueError("rays_per_cluster_mean must be >= 1")
        if self.distance_min < 0 or self.distance_mean < 0:
            raise ValueError("cluster distances must be non-negative")
        if self.virtual_delay_mean < 0 or self.shadowing_db < 0 or self.speed < 0:
            raise ValueError("cluster spreads and speeds must be non-negative")
        if not self.delay_scaling > 0:
            raise ValueError("delay_scaling must be positive")


@dataclass
class ClusterPair:
    id: int
    first_bounce_pos: np.ndarray
    last_bounce_pos: np.ndarray
    scatterers_a: np.ndarray  # (M_n, 3) offsets around first_bounce_pos
    scatterers_z: np.ndarray  # (M_n, 3) offsets around last_bounce_pos
    virtual_delay: float = 0.0
    mean_power: float = 1.0
    mobility_a: MobilityTrack = field(default_factory=MobilityTrack.static)
    mobility_z: MobilityTrack = field(default_factory=MobilityTrack.static)
    birth_epoch: tuple[float, int, int] = (0.0, 0, 0)

    def __post_init__(self) -> None:
        if len(self.scatterers_a) < 1 or len(self.scatterers_a) != len(self.scatterers_z):
            raise ValueError("a cluster needs M_n >= 1 paired scatterers")
        if self.virtual_delay < 0 or self.mean_power < 0:
            raise ValueError("virtual_delay and mean_power must be non-negative")

    @property
    def ray_count(self) -> int:
        return len(self.scatterers_a)

    def positions_a(self, times) -> np.ndarray:
        """First-bounce scatterer positions, shape ``(T, M_n, 3)``."""
        base = self.first_bounce_pos + self.mobility_a.displacement(np.atleast_1d(times))
        return base[:, None, :] + self.scatterers_a[None]

    def positions_z(self, times) -> np.ndarray:
        base = self.last_bounce_pos + self.mobility_z.displacement(np.atleast_1d(times))
        return base[:, None, :] + self.scatterers_z[None]


def pdp_power(excess_delay, delay_spread: float, delay_scaling: float):
    """Single-slope exponential power-delay profile."""
    return np.exp(-np.asarray(excess_delay, dtype=float) / (delay_scaling * delay_spread))


def _bounce(rng, origin, toward, gen: ClusterGenParams, spread_az: float, spread_el: float, normals: np.ndarray):
    az0, el0 = angles(origin, toward)
    az = az0 + gen.azimuth_std * rng.standard_normal()
    el = np.clip(el0 + gen.elevation_std * rng.standard_normal(), -np.pi / 2 + 1e-6, np.pi / 2 - 1e-6)
    dist = gen.distance_min + rng.exponential(1.0) * max(gen.distance_mean - gen.distance_min, 0.0)
    dist = max(dist, 1e-3)
    radial = direction(az, el)
    e_az = np.array([-np.sin(az), np.cos(az), 0.0])
    e_el = np.cross(radial, e_az)
    # Isotropic-in-range scatter: radial and azimuthal std d*sigma_az, elevation std d*sigma_el.
    offsets = dist * (
        spread_az * (normals[:, :1] * radial + normals[:, 1:2] * e_az) + spread_el * normals[:, 2:3] * e_el
    )
    return origin + dist * radial, offsets


def spawn_cluster(
    cluster_id: int,
    rng: np.random.Generator,
    tx_pos: np.ndarray,
    rx_pos: np.ndarray,
    gen: ClusterGenParams,
    lsp,
    birth_epoch=(0.0, 0, 0),
) -> ClusterPair:
    """Newborn twin cluster around the Tx/Rx reference positions.

    Draw counts do not depend on the spreads, so sweeping an angular spread
    with a fixed seed reuses the same underlying random numbers.
    """
    tx_pos = np.asarray(tx_pos, dtype=float)
    rx_pos = np.asarray(rx_pos, dtype=float)
    m = 1 + int(rng.poisson(gen.rays_per_cluster_mean - 1.0))
    normals_a = rng.standard_normal((m, 3))
    normals_z = rng.standard_normal((m, 3))
    pos_a, off_a = _bounce(rng, tx_pos, rx_pos, gen, lsp.azimuth_spread_tx, lsp.elevation_spread_tx, normals_a)
    pos_z, off_z = _bounce(rng, rx_pos, tx_pos, gen, lsp.azimuth_spread_rx, lsp.elevation_spread_rx, normals_z)
    excess = rng.exponential(gen.virtual_delay_mean) if gen.virtual_delay_mean > 0 else 0.0
    virtual = np.linalg.norm(pos_a - pos_z) / SPEED_OF_LIGHT + excess
    tau = (np.linalg.norm(pos_a - tx_pos) + np.linalg.norm(rx_pos - pos_z)) / SPEED_OF_LIGHT + virtual
    tau_los = np.linalg.norm(rx_pos - tx_pos) / SPEED_OF_LIGHT
    shadow = gen.shadowing_db * rng.standard_normal()
    power = float(pdp_power(max(tau - tau_los, 0.0), lsp.delay_spread, gen.delay_scaling) * 10.0 ** (-shadow / 10.0))
    heading = rng.uniform(-np.pi, np.pi, 2)
    track_a = MobilityTrack.constant(gen.speed, heading[0]) if gen.speed > 0 else MobilityTrack.static()
    track_z = MobilityTrack.constant(gen.speed, heading[1]) if gen.speed > 0 else MobilityTrack.static()
    return ClusterPair(cluster_id, pos_a, pos_z, off_a, off_z, float(virtual), power, track_a, track_z, birth_epoch)


class ClusterRegistry:
    """Owns every cluster ever born in one simulation run (ids never reused)."""

    def __init__(self, factory: Callable[[int, np.random.Generator], ClusterPair] | None = None):
        self.clusters: dict[int, ClusterPair] = {}
        self._next = 0
        self._factory = factory or _placeholder_cluster

    def spawn(self, rng: np.random.Generator) -> int:
        cid = self._next
        self._next += 1
        self.clusters[cid] = self._factory(cid, rng)
        return cid

    def __contains__(self, cid: int) -> bool:
        return cid in self.clusters

    def __len__(self) -> int:
        return len(self.clusters)


def _placeholder_cluster(cid: int, rng: np.random.Generator) -> ClusterPair:
    zero = np.zeros((1, 3))
    return ClusterPair(cid, np.zeros(3), np.zeros(3), zero, zero.copy())


def evolve(
    registry: ClusterRegistry,
    current: Iterable[int],
    p_survival: float,
    params: EvolutionParams,
    rng: np.random.Generator,
) -> frozenset[int]:
    """One birth-death step with survival probability ``p_survival``.

    The caller computes ``p_survival`` for the step (next time sample, next
    element or next frequency bin) with the ``survival_prob_*`` functions.
    """
    ids = sorted(current)
    keep = rng.random(len(ids)) < p_survival
    survivors = [cid for cid, k in zip(ids, keep) if k]
    births = int(rng.poisson(expected_new_clusters(params, p_survival)))
    newborn = [registry.spawn(rng) for _ in range(births)]
    return frozenset(survivors + newborn)


def evolve_chain(
    params: EvolutionParams,
    survivals: Sequence[float],
    rng: np.random.Generator,
    registry: ClusterRegistry | None = None,
) -> tuple[ClusterRegistry, list[frozenset[int]]]:
    """Run :func:`evolve` along one axis from a Poisson(lambda_G/lambda_R) start."""
    registry = registry or ClusterRegistry()
    state = frozenset(registry.spawn(rng) for _ in range(int(rng.poisson(params.mean_count))))
    chain = [state]
    for p in survivals:
        state = evolve(registry, state, p, params, rng)
        chain.append(state)
    return registry, chain


# --------------------------------------------------------------------------- grid visibility


def latent_tx(array: ArrayConfig, track: MobilityTrack, times, params: EvolutionParams) -> np.ndarray:
    """Latent evolution coordinates of every (time, element), shape ``(T, E, 2)``.

    Only the M-dimension index enters the array term; stacked rows of a URA
    share visibility.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    p = np.arange(array.element_count) % array.m_count
    eps1 = p * array.spacing * np.cos(array.elevation_tilt) / params.dc_array
    u = np.array([np.cos(array.azimuth_tilt), np.sin(array.azimuth_tilt)])
    motion = track.heading_path(times) / params.dc_time
    return motion[:, None, :] + eps1[None, :, None] * u


def latent_freq(freqs, params: EvolutionParams) -> np.ndarray:
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    return params.freq_profile(np.abs(freqs - freqs[0])) / params.dc_freq


def _compact(codes: np.ndarray) -> np.ndarray:
    """Rank-compress each column of an integer array to 0..k-1 labels."""
    order = np.argsort(codes, axis=0, kind="stable")
    ordered = np.take_along_axis(codes, order, axis=0)
    fresh = np.ones_like(ordered, dtype=np.int64)
    fresh[1:] = ordered[1:] != ordered[:-1]
    ranks = np.cumsum(fresh, axis=0) - 1
    labels = np.empty_like(ranks)
    np.put_along_axis(labels, order, ranks, axis=0)
    return labels


def _plane_labels(points: np.ndarray, rate: float, slots: int, rng: np.random.Generator) -> np.ndarray:
    """Cell labels of ``slots`` independent isotropic Poisson line processes.

    ``points`` has shape (N, 2); the result has shape (N, slots). The expected
    number of lines of one process crossing a segment of length d is
    ``rate * d``.
    """
    center = points.mean(axis=0)
    radius = float(np.max(np.linalg.norm(points - center, axis=1)))
    counts = rng.poisson(rate * np.pi * radius, slots)
    total = int(counts.sum())
    theta = rng.uniform(0.0, np.pi, total)
    normal = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    offset = normal @ center + rng.uniform(-radius, radius, total)
    codes = np.zeros((len(points), slots), dtype=np.int64)
    if total == 0:
        return codes
    side = (points @ normal.T) > offset
    slot_of = np.repeat(np.arange(slots), counts)
    if counts.max() <= 62:
        rank = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        weighted = side.astype(np.int64) << rank
        busy = np.flatnonzero(counts)
        starts = (np.cumsum(counts) - counts)[busy]
        codes[:, busy] = np.add.reduceat(weighted, starts, axis=1)
    else:
        for k in np.flatnonzero(counts):
            _, codes[:, k] = np.unique(side[:, slot_of == k], axis=0, return_inverse=True)
    return _compact(codes)


def _line_labels(points: np.ndarray, rate: float, slots: int, rng: np.random.Generator) -> np.ndarray:
    """Interval labels of ``slots`` independent Poisson point processes on a line."""
    lo, hi = float(points.min()), float(points.max())
    counts = rng.poisson(rate * (hi - lo), slots)
    cuts = rng.uniform(lo, hi, int(counts.sum()))
    slot_of = np.repeat(np.arange(slots), counts)
    # label = number of the slot's cut points strictly below the point
    below = cuts[None, :] < points[:, None]
    labels = np.zeros((len(points), slots), dtype=np.int64)
    np.add.at(labels.T, slot_of, below.T.astype(np.int64))
    return labels


def _group_product(ga: np.ndarray, gb: np.ndarray, groups: int) -> tuple[np.ndarray, np.ndarray]:
    """All index pairs (i, j) with ``ga[i] == gb[j]``; both inputs sorted by group."""
    nb = np.bincount(gb, minlength=groups)
    start_b = np.cumsum(nb) - nb
    reps = nb[ga]
    ii = np.repeat(np.arange(len(ga)), reps)
    offs = np.arange(len(ii)) - np.repeat(np.cumsum(reps) - reps, reps)
    return ii, start_b[ga[ii]] + offs


@dataclass
class VisibilityMap:
    """Factorised visibility: cluster ``n`` is seen at (p, q, t, b) iff
    ``tx[n, t, p] and rx[n, t, q] and freq[n, b]``."""

    ids: np.ndarray
    tx: np.ndarray  # (N, T, P) bool
    rx: np.ndarray  # (N, T, Q) bool
    freq: np.ndarray  # (N, B) bool

    def __getitem__(self, cell: tuple[int, int, int, int]) -> frozenset[int]:
        p, q, t, b = cell
        mask = self.tx[:, t, p] & self.rx[:, t, q] & self.freq[:, b]
        return frozenset(int(i) for i in self.ids[mask])

    def at_time(self, t: int) -> np.ndarray:
        """Visibility at time index ``t``, axes (cluster, q, p, b)."""
        return self.rx[:, t, :, None, None] & self.tx[:, t, None, :, None] & self.freq[:, None, None, :]

    @property
    def shape(self) -> tuple[int, int, int, int, int]:
        n, t, p = self.tx.shape
        return n, self.rx.shape[2], p, t, self.freq.shape[1]

    def __len__(self) -> int:
        return len(self.ids)


def _first_pairs(labels: np.ndarray):
    """Unique (t, label) pairs of a (T, E) label array with the first element index."""
    T, E = labels.shape
    width = int(labels.max()) + 1
    code = (np.arange(T)[:, None] * width + labels).reshape(-1)
    uniq, first = np.unique(code, return_index=True)
    return uniq // width, uniq % width, first % E


def realize_visibility(
    tx_latent: np.ndarray,
    rx_latent: np.ndarray,
    freq_latent: np.ndarray,
    params: EvolutionParams,
    rng: np.random.Generator,
    slots: int = 128,
) -> tuple[VisibilityMap, list[tuple[float, int, int, int]]]:
    """Cluster visibility over a full (time, Tx, Rx, frequency) grid.

    Returns the map and each cluster's birth cell ``(t, p, q, b)`` (first
    visible cell in time-major order). Cluster ids run from 0 in birth order.
    """
    T, P, _ = tx_latent.shape
    Q = rx_latent.shape[1]
    B = len(freq_latent)
    K = slots
    eta = params.mean_count / K
    lt = _plane_labels(tx_latent.reshape(-1, 2), params.lambda_r, K, rng).T.reshape(K, T, P)
    lr = _plane_labels(rx_latent.reshape(-1, 2), params.lambda_r, K, rng).T.reshape(K, T, Q)
    lf = _line_labels(np.asarray(freq_latent, dtype=float), params.lambda_r, K, rng).T  # (K, B)

    # unique (slot, t, label) with first element; groups are slot * T + t
    g_a, a, p_a = _first_pairs(lt.reshape(K * T, P))
    g_r, r, q_r = _first_pairs(lr.reshape(K * T, Q))
    k_f, f, b_f = _first_pairs(lf)
    ia, ir = _group_product(g_a, g_r, K * T)
    slot = g_a[ia] // T
    ja, jf = _group_product(slot, k_f, K)
    ia, ir = ia[ja], ir[ja]
    slot = slot[ja]
    t_first = g_a[ia] % T
    wa, wr, wf = int(a.max()) + 1, int(r.max()) + 1, int(f.max()) + 1
    code = ((slot * wa + a[ia]) * wr + r[ir]) * wf + f[jf]
    # rows are ordered by (slot, t), so the first occurrence carries the earliest t
    _, first = np.unique(code, return_index=True)
    ia, ir, jf, slot, t_first = ia[first], ir[first], jf[first], slot[first], t_first[first]

    counts = rng.poisson(eta, len(first))
    rep = np.repeat(np.arange(len(first)), counts)
    cells = np.stack([t_first[rep], p_a[ia[rep]], q_r[ir[rep]], b_f[jf[rep]]], axis=1)
    order = np.lexsort((f[jf[rep]], r[ir[rep]], a[ia[rep]], slot[rep], cells[:, 3], cells[:, 2], cells[:, 1], cells[:, 0]))
    rep = rep[order]
    k_n = slot[rep]
    tx = lt[k_n] == a[ia[rep]][:, None, None]
    rx = lr[k_n] == r[ir[rep]][:, None, None]
    fr = lf[k_n] == f[jf[rep]][:, None]
    births = [tuple(int(x) for x in c) for c in cells[order]]
    return VisibilityMap(np.arange(len(rep)), tx, rx, fr), births
