"""Sum-of-sinusoids Gaussian fields for spatially consistent large-scale parameters.

The field's autocorrelation is a compound of a Gaussian and an exponential
decay::

    rho(d) = w * exp(-(d / d_g)**2) + (1 - w) * exp(-d / d_e)

Spatial frequencies are drawn from the matching 2D spectral density: a
Rayleigh radius for the Gaussian part and the radius of an isotropic 2D
Cauchy law for the exponential part. Radii are taken at stratified
quantiles, directions and phases are random.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .rng import substream

__all__ = [
    "LSP_NAMES",
    "SosFieldSpec",
    "SosField",
    "LspTransform",
    "LspSample",
    "build_field",
    "sample_field",
    "target_acf",
    "build_fields",
    "lsp_at",
]

LSP_NAMES = (
    "delay_spread",
    "azimuth_spread_tx",
    "azimuth_spread_rx",
    "elevation_spread_tx",
    "elevation_spread_rx",
    "shadowing",
    "k_factor",
)


@dataclass(frozen=True)
class SosFieldSpec:
    sinusoid_count: int = 300
    corr_distance_gauss: float = 50.0
    corr_distance_exp: float = 50.0
    mix_weight: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.sinusoid_count < 1:
            raise ValueError("sinusoid_count must be >= 1")
        if not (self.corr_distance_gauss > 0 and self.corr_distance_exp > 0):
            raise ValueError("correlation distances must be positive")
        if not 0.0 <= self.mix_weight <= 1.0:
            raise ValueError("mix_weight must lie in [0, 1]")


@dataclass(frozen=True)
class SosField:
    frequencies: np.ndarray  # (N, 2) cycles/m
    phases: np.ndarray  # (N,)
    amplitudes: np.ndarray  # (N,)

    def __len__(self) -> int:
        return len(self.phases)

    def __call__(self, position) -> np.ndarray | float:
        return sample_field(self, position)

    @classmethod
    def zero(cls) -> "SosField":
        return cls(np.zeros((1, 2)), np.zeros(1), np.zeros(1))


def target_acf(d, spec: SosFieldSpec) -> np.ndarray:
    d = np.abs(np.asarray(d, dtype=float))
    w = spec.mix_weight
    return w * np.exp(-((d / spec.corr_distance_gauss) ** 2)) + (1 - w) * np.exp(-d / spec.corr_distance_exp)


def _stratified(count: int) -> np.ndarray:
    # One uniform per stratum, at the stratum midpoint; keeps the Cauchy tail finite.
    return (np.arange(count) + 0.5) / count


def build_field(spec: SosFieldSpec) -> SosField:
    """Deterministic SoS field for ``spec`` with unit variance."""
    rng = substream(spec.seed, "lsp-field")
    n = spec.sinusoid_count
    n_gauss = int(round(spec.mix_weight * n))
    n_exp = n - n_gauss

    radii = []
    if n_gauss:
        u = _stratified(n_gauss)
        # exp(-(d/dg)^2) = E[cos(2 pi k.d)] for k ~ N(0, s^2 I), s = 1 / (pi dg sqrt 2)
        s = 1.0 / (np.pi * spec.corr_distance_gauss * np.sqrt(2.0))
        radii.append(s * np.sqrt(-2.0 * np.log1p(-u)))
    if n_exp:
        u = _stratified(n_exp)
        # isotropic 2D Cauchy radius: CDF 1 - (1 + r^2)^(-1/2)
        r = np.sqrt(1.0 / (1.0 - u) ** 2 - 1.0)
        radii.append(r / (2.0 * np.pi * spec.corr_distance_exp))
    radius = np.concatenate(radii)
    theta = rng.uniform(0.0, 2.0 * np.pi, n)
    freqs = radius[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    phases = rng.uniform(0.0, 2.0 * np.pi, n)
    amplitudes = np.full(n, np.sqrt(2.0 / n))
    return SosField(freqs, phases, amplitudes)


def sample_field(field: SosField, position) -> np.ndarray | float:
    """Field value(s) at 2D position(s); last axis of ``position`` is (x, y)."""
    pos = np.asarray(position, dtype=float)
    arg = 2.0 * np.pi * (pos @ field.frequencies.T) + field.phases
    out = np.cos(arg) @ field.amplitudes
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class LspTransform:
    """Maps a standard-normal field value to a physical LSP.

    ``kind="lognormal"``: ``median * 10**(sigma_db * g / 10)``.
    ``kind="db"``: ``median + sigma_db * g`` (shadowing, in dB).
    """

    median: float
    sigma_db: float = 0.0
    kind: str = "lognormal"

    def __post_init__(self) -> None:
        if self.kind not in ("lognormal", "db"):
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if self.sigma_db < 0:
            raise ValueError("sigma_db must be non-negative")
        if self.kind == "lognormal" and self.median < 0:
            raise ValueError("lognormal median must be non-negative")

    def __call__(self, g):
        if self.kind == "db":
            return self.median + self.sigma_db * g
        return self.median * 10.0 ** (self.sigma_db * g / 10.0)


@dataclass(frozen=True)
class LspSample:
    delay_spread: float
    azimuth_spread_tx: float
    azimuth_spread_rx: float
    elevation_spread_tx: float
    elevation_spread_rx: float
    shadowing: float
    k_factor: float


DEFAULT_TRANSFORMS: Mapping[str, LspTransform] = {
    "delay_spread": LspTransform(50e-9, 2.0),
    "azimuth_spread_tx": LspTransform(np.deg2rad(5.0), 1.0),
    "azimuth_spread_rx": LspTransform(np.deg2rad(5.0), 1.0),
    "elevation_spread_tx": LspTransform(np.deg2rad(3.0), 1.0),
    "elevation_spread_rx": LspTransform(np.deg2rad(3.0), 1.0),
    "shadowing": LspTransform(0.0, 3.0, "db"),
    "k_factor": LspTransform(1.0, 3.0),
}


def build_fields(base: SosFieldSpec, seed: int, names=LSP_NAMES) -> dict[str, SosField]:
    """One independent field per LSP, all sharing ``base``'s ACF shape."""
    out = {}
    for i, name in enumerate(names):
        spec = SosFieldSpec(base.sinusoid_count, base.corr_distance_gauss, base.corr_distance_exp, base.mix_weight, seed=_mix(seed, i))
        out[name] = build_field(spec)
    return out


def _mix(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def lsp_at(fields: Mapping[str, SosField], tx_pos, rx_pos, transforms: Mapping[str, LspTransform] = DEFAULT_TRANSFORMS) -> LspSample:
    """LSPs keyed on the midpoint of the Tx and Rx ground positions."""
    missing = [n for n in LSP_NAMES if n not in fields]
    if missing:
        raise KeyError(f"missing field(s) for {', '.join(missing)}")
    mid = 0.5 * (np.asarray(tx_pos, dtype=float)[..., :2] + np.asarray(rx_pos, dtype=float)[..., :2])
    values = {name: transforms[name](sample_field(fields[name], mid)) for name in LSP_NAMES}
    return LspSample(**values)
