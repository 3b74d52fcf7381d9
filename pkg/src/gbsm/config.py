"""Scenario configuration: strict JSON schema, validation and conversion to
the library's domain objects.

Keys carry SI unit suffixes (``_hz``, ``_m``, ``_s``, ``_db``, ``_rad``,
``_mps``, ``_per_m``).
"""

from __future__ import annotations

import copy
import hashlib
import json
from importlib import resources
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .channel import FieldPattern, LinkSetup, LsfModel, RayParams, path_loss_db
from .evolution import ClusterGenParams, EvolutionParams
from .geometry import ArrayConfig, MobilityTrack, Segment, direction, wavelength
from .lsp import LSP_NAMES, LspTransform, SosFieldSpec, build_fields

__all__ = ["ConfigError", "ScenarioConfig", "parse_config", "preset_names", "preset_path"]


class ConfigError(ValueError):
    """Raised with every validation problem found in a config."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid scenario config:\n  " + "\n  ".join(self.errors))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ArraySpec(_Strict):
    m_count: int = Field(1, ge=1)
    n_count: int = Field(1, ge=1)
    spacing_m: Optional[float] = Field(None, gt=0)
    spacing_wavelengths: float = Field(0.5, gt=0)
    azimuth_tilt_rad: float = Field(0.0, ge=-np.pi, lt=np.pi)
    elevation_tilt_rad: float = Field(0.0, ge=-np.pi / 2, le=np.pi / 2)
    reference_position_m: Optional[tuple[float, float, float]] = None


class SegmentSpec(_Strict):
    start_s: float = Field(0.0, ge=0)
    speed_mps: float = Field(0.0, ge=0)
    azimuth_rad: float = 0.0
    elevation_rad: float = 0.0


class TrackSpec(_Strict):
    segments: list[SegmentSpec] = Field(default_factory=lambda: [SegmentSpec()], min_length=1)

    @model_validator(mode="after")
    def _ordered(self):
        starts = [s.start_s for s in self.segments]
        if starts[0] != 0.0:
            raise ValueError("first segment must start at 0 s")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("segment start times must be strictly increasing")
        return self


class EvolutionSpec(_Strict):
    lambda_g_per_m: float = Field(20.0, gt=0)
    lambda_r_per_m: float = Field(1.0, gt=0)
    dc_array_m: float = Field(40.0, gt=0)
    dc_time_m: float = Field(40.0, gt=0)
    dc_freq: float = Field(1e4, gt=0)
    freq_shape: Literal["sqrt", "linear"] = "sqrt"


class TransformSpec(_Strict):
    median: float
    sigma_db: float = Field(0.0, ge=0)


class LspSpec(_Strict):
    sinusoid_count: int = Field(300, ge=1)
    corr_distance_gauss_m: float = Field(50.0, gt=0)
    corr_distance_exp_m: float = Field(50.0, gt=0)
    mix_weight: float = Field(0.5, ge=0, le=1)
    delay_spread_s: TransformSpec = TransformSpec(median=50e-9, sigma_db=2.0)
    azimuth_spread_tx_rad: TransformSpec = TransformSpec(median=float(np.deg2rad(5.0)), sigma_db=1.0)
    azimuth_spread_rx_rad: TransformSpec = TransformSpec(median=float(np.deg2rad(5.0)), sigma_db=1.0)
    elevation_spread_tx_rad: TransformSpec = TransformSpec(median=float(np.deg2rad(3.0)), sigma_db=1.0)
    elevation_spread_rx_rad: TransformSpec = TransformSpec(median=float(np.deg2rad(3.0)), sigma_db=1.0)
    shadowing_db: TransformSpec = TransformSpec(median=0.0, sigma_db=3.0)
    k_factor: TransformSpec = TransformSpec(median=1.0, sigma_db=3.0)

    @model_validator(mode="after")
    def _positive_medians(self):
        for key in ("delay_spread_s", "azimuth_spread_tx_rad", "azimuth_spread_rx_rad",
                    "elevation_spread_tx_rad", "elevation_spread_rx_rad"):
            if not getattr(self, key).median > 0:
                raise ValueError(f"{key}.median must be positive")
        if self.k_factor.median < 0:
            raise ValueError("k_factor.median must be non-negative")
        return self


class ClusterSpec(_Strict):
    rays_per_cluster_mean: float = Field(20.0, ge=1)
    distance_mean_m: float = Field(30.0, gt=0)
    distance_min_m: float = Field(5.0, ge=0)
    azimuth_std_rad: float = Field(float(np.deg2rad(30.0)), ge=0)
    elevation_std_rad: float = Field(float(np.deg2rad(5.0)), ge=0)
    virtual_delay_mean_s: float = Field(20e-9, ge=0)
    delay_scaling: float = Field(2.3, gt=0)
    shadowing_db: float = Field(3.0, ge=0)
    speed_mps: float = Field(0.0, ge=0)
    xpr_median_db: float = 9.0
    xpr_sigma_db: float = Field(3.0, ge=0)
    slots: int = Field(128, ge=1)


class PatternSpec(_Strict):
    kind: Literal["isotropic", "short_dipole", "table"] = "isotropic"
    elevations_rad: list[float] = Field(default_factory=list)
    azimuths_rad: list[float] = Field(default_factory=list)
    v_table: list[list[float]] = Field(default_factory=list)
    h_table: list[list[float]] = Field(default_factory=list)


class PatternsSpec(_Strict):
    tx: PatternSpec = PatternSpec()
    rx: PatternSpec = PatternSpec()


class LsfSpec(_Strict):
    apply: bool = False
    pl0_db: float = 32.4
    d0_m: float = Field(1.0, gt=0)
    exponent: float = Field(2.0, gt=0)
    blockage_db: float = 0.0
    absorption_db: float = 0.0


class TimeGridSpec(_Strict):
    start_s: float = Field(0.0, ge=0)
    step_s: float = Field(1e-3, gt=0)
    count: int = Field(1, ge=1)


class FreqGridSpec(_Strict):
    start_hz: float = 0.0
    step_hz: float = Field(1e6, gt=0)
    count: int = Field(1, ge=1)


class UsersSpec(_Strict):
    count: int = Field(1, ge=1)
    azimuth_span_rad: float = Field(float(np.pi / 2), ge=0)
    center_azimuth_rad: Optional[float] = None
    distance_m: Optional[float] = Field(None, gt=0)


class StatisticsSpec(_Strict):
    kinds: list[Literal["acf", "ccf", "fcf", "stfcf"]] = Field(default_factory=lambda: ["acf"])
    reference_time_index: int = Field(0, ge=0)
    reference_freq_index: int = Field(0, ge=0)
    threshold: float = Field(0.5, gt=0, lt=1)


class MetricsSpec(_Strict):
    kinds: list[Literal["svs", "capacity"]] = Field(default_factory=lambda: ["svs", "capacity"])
    link: Literal["downlink", "uplink"] = "downlink"
    snr_db: list[float] = Field(default_factory=lambda: [10.0])
    time_index: int = Field(0, ge=0)
    freq_index: int = Field(0, ge=0)


class LspMapSpec(_Strict):
    parameter: Literal[LSP_NAMES] = "delay_spread"  # type: ignore[valid-type]
    extent_m: float = Field(300.0, gt=0)
    resolution_m: float = Field(5.0, gt=0)


class VariantSpec(_Strict):
    label: str = Field(pattern=r"^[A-Za-z0-9_.-]+$")
    overrides: dict[str, Any] = Field(default_factory=dict)


class OutputSpec(_Strict):
    figures: bool = True
    binary: bool = False
    channel_csv: bool = True


class ScenarioConfig(_Strict):
    """Full parameterisation of a simulation run."""

    name: str = "scenario"
    description: str = ""
    notes: list[str] = Field(default_factory=list)
    seed: int = Field(ge=0)
    carrier_hz: float = Field(gt=0)
    initial_distance_m: float = Field(100.0, gt=0)
    los_azimuth_rad: float = 0.0
    channel_mode: Literal["rician", "los_only", "nlos_only"] = "rician"
    tx_array: ArraySpec = ArraySpec()
    rx_array: ArraySpec = ArraySpec()
    tx_track: TrackSpec = TrackSpec()
    rx_track: TrackSpec = TrackSpec()
    evolution: EvolutionSpec = EvolutionSpec()
    lsp: LspSpec = LspSpec()
    clusters: ClusterSpec = ClusterSpec()
    patterns: PatternsSpec = PatternsSpec()
    lsf: LsfSpec = LsfSpec()
    time_grid: TimeGridSpec = TimeGridSpec()
    freq_grid: FreqGridSpec = FreqGridSpec()
    users: Optional[UsersSpec] = None
    statistics: StatisticsSpec = StatisticsSpec()
    metrics: MetricsSpec = MetricsSpec()
    lsp_map: LspMapSpec = LspMapSpec()
    variants: list[VariantSpec] = Field(default_factory=list)
    realization_count: int = Field(1, ge=1)
    max_grid_cells: float = Field(5e7, gt=0)
    outputs: OutputSpec = OutputSpec()

    # ------------------------------------------------------------------ derived objects

    @property
    def wavelength(self) -> float:
        return wavelength(self.carrier_hz)

    @property
    def times(self) -> np.ndarray:
        g = self.time_grid
        return g.start_s + g.step_s * np.arange(g.count)

    @property
    def freqs(self) -> np.ndarray:
        g = self.freq_grid
        return g.start_hz + g.step_hz * np.arange(g.count)

    @property
    def user_count(self) -> int:
        return self.users.count if self.users else 1

    def _array(self, spec: ArraySpec, position) -> ArrayConfig:
        spacing = spec.spacing_m if spec.spacing_m is not None else spec.spacing_wavelengths * self.wavelength
        return ArrayConfig(spec.m_count, spec.n_count, spacing, spec.azimuth_tilt_rad, spec.elevation_tilt_rad, tuple(position))

    def tx_array_config(self) -> ArrayConfig:
        return self._array(self.tx_array, self.tx_array.reference_position_m or (0.0, 0.0, 0.0))

    def rx_array_config(self, user: int = 0) -> ArrayConfig:
        tx_ref = np.asarray(self.tx_array.reference_position_m or (0.0, 0.0, 0.0))
        if self.users is None:
            if self.rx_array.reference_position_m is not None:
                pos = self.rx_array.reference_position_m
            else:
                pos = tx_ref + self.initial_distance_m * direction(self.los_azimuth_rad, 0.0)
            return self._array(self.rx_array, pos)
        u = self.users
        center = u.center_azimuth_rad if u.center_azimuth_rad is not None else self.tx_array.azimuth_tilt_rad + np.pi / 2
        frac = 0.0 if u.count == 1 else user / (u.count - 1) - 0.5
        dist = u.distance_m or self.initial_distance_m
        height = (self.rx_array.reference_position_m or (0.0, 0.0, tx_ref[2]))[2]
        pos = tx_ref + dist * direction(center + frac * u.azimuth_span_rad, 0.0)
        pos[2] = height
        return self._array(self.rx_array, pos)

    @staticmethod
    def _track(spec: TrackSpec) -> MobilityTrack:
        return MobilityTrack(tuple(Segment(s.start_s, s.speed_mps, s.azimuth_rad, s.elevation_rad) for s in spec.segments))

    def tx_track_config(self) -> MobilityTrack:
        return self._track(self.tx_track)

    def rx_track_config(self) -> MobilityTrack:
        return self._track(self.rx_track)

    def evolution_params(self) -> EvolutionParams:
        e = self.evolution
        return EvolutionParams(e.lambda_g_per_m, e.lambda_r_per_m, e.dc_array_m, e.dc_time_m, e.dc_freq, e.freq_shape)

    def cluster_params(self) -> ClusterGenParams:
        c = self.clusters
        return ClusterGenParams(c.rays_per_cluster_mean, c.distance_mean_m, c.distance_min_m, c.azimuth_std_rad,
                                c.elevation_std_rad, c.virtual_delay_mean_s, c.delay_scaling, c.shadowing_db, c.speed_mps)

    def lsp_transforms(self) -> dict[str, LspTransform]:
        s = self.lsp
        out = {}
        for name in LSP_NAMES:
            key = {"delay_spread": "delay_spread_s", "shadowing": "shadowing_db", "k_factor": "k_factor"}.get(name, name + "_rad")
            t = getattr(s, key)
            out[name] = LspTransform(t.median, t.sigma_db, "db" if name == "shadowing" else "lognormal")
        return out

    def lsp_field_spec(self) -> SosFieldSpec:
        s = self.lsp
        return SosFieldSpec(s.sinusoid_count, s.corr_distance_gauss_m, s.corr_distance_exp_m, s.mix_weight, self.seed)

    def lsp_fields(self, realization: int = 0):
        seed = int(np.random.SeedSequence([self.seed, realization]).generate_state(1, np.uint64)[0])
        return build_fields(self.lsp_field_spec(), seed)

    @staticmethod
    def _pattern(spec: PatternSpec) -> FieldPattern:
        return FieldPattern(spec.kind, tuple(spec.elevations_rad), tuple(spec.azimuths_rad),
                            tuple(map(tuple, spec.v_table)), tuple(map(tuple, spec.h_table)))

    def link_setup(self, realization: int = 0, user: int = 0, fields=None) -> LinkSetup:
        c = self.clusters
        return LinkSetup(
            carrier_hz=self.carrier_hz,
            tx_array=self.tx_array_config(),
            rx_array=self.rx_array_config(user),
            tx_track=self.tx_track_config(),
            rx_track=self.rx_track_config(),
            times=self.times,
            freqs=self.freqs,
            evolution=self.evolution_params(),
            clusters=self.cluster_params(),
            rays=RayParams(c.xpr_median_db, c.xpr_sigma_db),
            tx_pattern=self._pattern(self.patterns.tx),
            rx_pattern=self._pattern(self.patterns.rx),
            lsp_fields=fields if fields is not None else self.lsp_fields(realization),
            lsp_transforms=self.lsp_transforms(),
            mode=self.channel_mode,
            slots=c.slots,
        )

    def lsf_model(self, user: int = 0, shadowing_db: float = 0.0) -> LsfModel:
        d = np.linalg.norm(np.asarray(self.rx_array_config(user).reference_position) - np.asarray(self.tx_array_config().reference_position))
        s = self.lsf
        return LsfModel(path_loss_db(d, s.pl0_db, s.exponent, s.d0_m), shadowing_db, s.blockage_db, s.absorption_db)

    # ------------------------------------------------------------------ identity

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def with_overrides(self, overrides: dict[str, Any]) -> "ScenarioConfig":
        data = self.model_dump(mode="json")
        for path, value in overrides.items():
            _set_path(data, path, value)
        return _validate(data, strict=True)

    def expanded(self) -> list[tuple[str, "ScenarioConfig"]]:
        """``("base", self)`` followed by one config per declared variant."""
        out = [("base", self.with_overrides({"variants": []}))]
        for v in self.variants:
            out.append((v.label, self.with_overrides({"variants": [], **v.overrides})))
        return out


def _set_path(data: Any, path: str, value: Any) -> None:
    keys = path.split(".")
    node = data
    for k in keys[:-1]:
        node = node[int(k)] if isinstance(node, list) else node.setdefault(k, {})
        if node is None:
            raise ConfigError([f"{path}: cannot override inside an unset section"])
    last = keys[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value


def _format_error(err: dict) -> str | None:
    loc = ".".join(str(x) for x in err["loc"])
    if err["type"] == "missing" and loc == "seed":
        return "seed required"
    if err["type"] == "extra_forbidden":
        return f"{loc}: unknown key"
    msg = err["msg"]
    if msg.startswith("Value error, "):
        msg = msg[len("Value error, "):]
    return f"{loc}: {msg}" if loc else msg


def _validate(data: dict, strict: bool) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        errors = exc.errors()
        if not strict:
            kept = [e for e in errors if e["type"] != "extra_forbidden"]
            if len(kept) < len(errors):
                cleaned = copy.deepcopy(data)
                for e in errors:
                    if e["type"] == "extra_forbidden":
                        _drop(cleaned, e["loc"])
                return _validate(cleaned, strict=False)
        raise ConfigError([_format_error(e) for e in errors]) from None


def _drop(data: Any, loc) -> None:
    node = data
    for k in loc[:-1]:
        node = node[k]
    node.pop(loc[-1], None)


def preset_names() -> list[str]:
    root = resources.files("gbsm") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def preset_path(name: str) -> Path:
    stem = name[:-5] if name.endswith(".json") else name
    return Path(str(resources.files("gbsm") / "presets" / f"{stem}.json"))


def parse_config(source: str | Path | dict, strict: bool = True) -> ScenarioConfig:
    """Load and validate a scenario from a JSON file, preset name or dict."""
    if isinstance(source, dict):
        data = source
    else:
        path = Path(source)
        if not path.exists():
            candidate = preset_path(str(source))
            if not candidate.exists():
                raise ConfigError([f"{source}: no such file or preset"])
            path = candidate
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}: invalid JSON ({exc})"]) from None
    if not isinstance(data, dict):
        raise ConfigError(["config root must be a JSON object"])
    return _validate(data, strict)
