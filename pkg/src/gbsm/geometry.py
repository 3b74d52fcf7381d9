"""Array layout, terminal trajectories and exact spherical-wavefront geometry.

Frame: right-handed Cartesian, x-y horizontal, z up. Azimuth is measured from
+x toward +y, elevation from the horizontal plane.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "SPEED_OF_LIGHT",
    "ArrayConfig",
    "MobilityTrack",
    "Segment",
    "GeometrySnapshot",
    "direction",
    "element_position",
    "element_positions",
    "snapshot",
    "propagation_delay",
    "per_element_angles",
    "angles",
    "wavelength",
]

SPEED_OF_LIGHT = 299_792_458.0


def wavelength(carrier_hz: float) -> float:
    return SPEED_OF_LIGHT / carrier_hz


def direction(azimuth: float | np.ndarray, elevation: float | np.ndarray) -> np.ndarray:
    """Unit vector(s) for the given azimuth/elevation, stacked on the last axis."""
    azimuth = np.asarray(azimuth, dtype=float)
    elevation = np.asarray(elevation, dtype=float)
    ce = np.cos(elevation)
    return np.stack([ce * np.cos(azimuth), ce * np.sin(azimuth), np.sin(elevation)], axis=-1)


@dataclass(frozen=True)
class ArrayConfig:
    """Uniform rectangular array built from ``n_count`` stacked ULAs of ``m_count`` elements."""

    m_count: int = 1
    n_count: int = 1
    spacing: float = 0.05
    azimuth_tilt: float = 0.0
    elevation_tilt: float = 0.0
    reference_position: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if self.m_count < 1 or self.n_count < 1:
            raise ValueError("element counts must be >= 1")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        if not -np.pi <= self.azimuth_tilt < np.pi:
            raise ValueError("azimuth_tilt must lie in [-pi, pi)")
        if not -np.pi / 2 <= self.elevation_tilt <= np.pi / 2:
            raise ValueError("elevation_tilt must lie in [-pi/2, pi/2]")
        object.__setattr__(self, "reference_position", tuple(float(x) for x in self.reference_position))

    @property
    def element_count(self) -> int:
        return self.m_count * self.n_count

    @property
    def m_axis(self) -> np.ndarray:
        return direction(self.azimuth_tilt, self.elevation_tilt)

    @property
    def n_axis(self) -> np.ndarray:
        """Second URA axis: perpendicular to the M-axis, in its vertical plane.

        A vertical M-axis has no such plane; the horizontal normal of the
        azimuth tilt is used instead.
        """
        m = self.m_axis
        up = np.array([0.0, 0.0, 1.0])
        n = up - np.dot(up, m) * m
        norm = np.linalg.norm(n)
        if norm < 1e-12:
            return np.array([-np.sin(self.azimuth_tilt), np.cos(self.azimuth_tilt), 0.0])
        return n / norm

    def offsets(self) -> np.ndarray:
        """In-array offsets of all elements, shape ``(m_count * n_count, 3)``.

        Flat element index is ``(u - 1) * m_count + (p - 1)``.
        """
        p = np.arange(self.m_count)
        u = np.arange(self.n_count)
        uu, pp = np.meshgrid(u, p, indexing="ij")
        off = (pp.reshape(-1, 1) * self.m_axis + uu.reshape(-1, 1) * self.n_axis) * self.spacing
        return off


@dataclass(frozen=True)
class Segment:
    start_time: float
    speed: float
    azimuth: float = 0.0
    elevation: float = 0.0

    @property
    def velocity(self) -> np.ndarray:
        return self.speed * direction(self.azimuth, self.elevation)

    @property
    def heading(self) -> np.ndarray:
        """Horizontal heading scaled by speed, used by the evolution latent space."""
        return self.speed * np.array([np.cos(self.azimuth), np.sin(self.azimuth)])


@dataclass(frozen=True)
class MobilityTrack:
    """Piecewise-constant velocity trajectory."""

    segments: tuple[Segment, ...] = field(default_factory=lambda: (Segment(0.0, 0.0),))

    def __post_init__(self) -> None:
        segs = tuple(self.segments)
        if not segs:
            raise ValueError("a track needs at least one segment")
        if segs[0].start_time != 0.0:
            raise ValueError("first segment must start at t=0")
        starts = [s.start_time for s in segs]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("segment start times must be strictly increasing")
        if any(s.speed < 0 for s in segs):
            raise ValueError("speed must be non-negative")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def static(cls) -> "MobilityTrack":
        return cls()

    @classmethod
    def constant(cls, speed: float, azimuth: float = 0.0, elevation: float = 0.0) -> "MobilityTrack":
        return cls((Segment(0.0, speed, azimuth, elevation),))

    def _integrate(self, t: float | np.ndarray, rates: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("time before the first segment")
        starts = np.array([s.start_time for s in self.segments])
        ends = np.append(starts[1:], np.inf)
        durations = np.clip(t[..., None] - starts, 0.0, ends - starts)
        return durations @ rates

    def displacement(self, t: float | np.ndarray) -> np.ndarray:
        """Displacement from the t=0 position, shape ``t.shape + (3,)``."""
        return self._integrate(t, np.array([s.velocity for s in self.segments]))

    def heading_path(self, t: float | np.ndarray) -> np.ndarray:
        """Integrated horizontal heading ``sum(speed * dt * (cos a, sin a))``."""
        return self._integrate(t, np.array([s.heading for s in self.segments]))

    def speed_at(self, t: float) -> float:
        idx = np.searchsorted([s.start_time for s in self.segments], t, side="right") - 1
        return self.segments[max(idx, 0)].speed


@dataclass
class GeometrySnapshot:
    tx_element_positions: np.ndarray
    rx_element_positions: np.ndarray
    time: float


def element_position(
    array: ArrayConfig, p: int, u: int, track: MobilityTrack | None = None, t: float = 0.0
) -> np.ndarray:
    """Position of element ``A_(p,u)`` (1-based indices) at time ``t``."""
    if not 1 <= p <= array.m_count or not 1 <= u <= array.n_count:
        raise IndexError(f"element ({p}, {u}) outside {array.m_count}x{array.n_count} array")
    if t < 0:
        raise ValueError("time before the first segment")
    track = track or MobilityTrack.static()
    offset = ((p - 1) * array.m_axis + (u - 1) * array.n_axis) * array.spacing
    return np.asarray(array.reference_position) + track.displacement(t) + offset


def element_positions(array: ArrayConfig, track: MobilityTrack, times: Sequence[float] | np.ndarray) -> np.ndarray:
    """All element positions over a time grid, shape ``(T, elements, 3)``."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    base = np.asarray(array.reference_position) + track.displacement(times)
    return base[:, None, :] + array.offsets()[None, :, :]


def snapshot(tx: ArrayConfig, tx_track: MobilityTrack, rx: ArrayConfig, rx_track: MobilityTrack, t: float) -> GeometrySnapshot:
    return GeometrySnapshot(element_positions(tx, tx_track, [t])[0], element_positions(rx, rx_track, [t])[0], t)


def propagation_delay(tx_pos, scatterer_a, scatterer_z, rx_pos, virtual_delay=0.0):
    """Twin-cluster path delay; the a->z leg is replaced by ``virtual_delay``.

    Works elementwise on broadcastable arrays of points (last axis = xyz). For
    the LOS path pass ``scatterer_a = scatterer_z = rx_pos`` (or use
    ``np.linalg.norm(tx - rx) / c`` directly).
    """
    tx_pos, scatterer_a, scatterer_z, rx_pos = (np.asarray(x, dtype=float) for x in (tx_pos, scatterer_a, scatterer_z, rx_pos))
    d = np.linalg.norm(tx_pos - scatterer_a, axis=-1) + np.linalg.norm(scatterer_z - rx_pos, axis=-1)
    return d / SPEED_OF_LIGHT + virtual_delay


def angles(origin: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised azimuth/elevation of ``target`` seen from ``origin``.

    Azimuth is wrapped to ``[-pi, pi)``; straight up/down reports azimuth 0.
    """
    delta = np.asarray(target, dtype=float) - np.asarray(origin, dtype=float)
    dist = np.linalg.norm(delta, axis=-1)
    az = np.arctan2(delta[..., 1], delta[..., 0])
    az = np.where(az >= np.pi, az - 2 * np.pi, az)
    with np.errstate(invalid="ignore", divide="ignore"):
        el = np.arcsin(np.clip(delta[..., 2] / dist, -1.0, 1.0))
    return az, el


def per_element_angles(element_pos, scatterer_pos) -> tuple[float, float]:
    """Azimuth and elevation from one element toward one scatterer."""
    element_pos = np.asarray(element_pos, dtype=float)
    scatterer_pos = np.asarray(scatterer_pos, dtype=float)
    if np.linalg.norm(scatterer_pos - element_pos) == 0.0:
        raise ValueError("element and scatterer coincide")
    az, el = angles(element_pos, scatterer_pos)
    return float(az), float(el)
