"""Run orchestration for the command line subcommands.

Each realization is computed from (seed, realization, user) substreams only,
so the set of output bytes does not depend on the worker count.
"""

from __future__ import annotations

import json
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from importlib import metadata
from pathlib import Path

import numpy as np

from . import io, plotting
from .channel import ChannelRealization, apply_lsf, full_matrix
from .config import ScenarioConfig
from .evolution import latent_freq, latent_tx, realize_visibility, survival_prob_total
from .lsp import lsp_at
from .metrics import capacity, cdf, svs
from .rng import substream
from .statistics import coherence_scale, fcf, space_ccf, stfcf, temporal_acf

__all__ = ["SUBCOMMANDS", "run", "realize_many"]

SUBCOMMANDS = ("simulate", "stats", "metrics", "lsp-map", "evolution-map")


# --------------------------------------------------------------------------- workers


def _realize(payload: tuple[str, int, tuple[int, ...]]) -> list[np.ndarray]:
    cfg_json, r, users = payload
    cfg = ScenarioConfig.model_validate_json(cfg_json)
    return [full_matrix(cfg, r, u).ctf for u in users]


def realize_many(cfg: ScenarioConfig, realizations, users=(0,), workers: int = 1) -> list[list[np.ndarray]]:
    """Channel tensors for each requested realization, in request order."""
    payloads = [(cfg.canonical_json(), int(r), tuple(users)) for r in realizations]
    if workers <= 1 or len(payloads) <= 1:
        return [_realize(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_realize, payloads, chunksize=max(1, len(payloads) // (4 * workers))))


def _versions() -> dict[str, str]:
    out = {"python": platform.python_version()}
    for pkg in ("numpy", "scipy", "matplotlib", "pydantic"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = "unknown"
    try:
        out["gbsm"] = metadata.version("gbsm")
    except metadata.PackageNotFoundError:
        out["gbsm"] = "unknown"
    return out


def _suffix(label: str) -> str:
    return "" if label == "base" else f"_{label}"


# --------------------------------------------------------------------------- subcommands


def _simulate(cfg: ScenarioConfig, out: Path, workers: int) -> list[Path]:
    files = []
    users = range(cfg.user_count)
    tensors = realize_many(cfg, range(cfg.realization_count), users, workers)
    for r, per_user in enumerate(tensors):
        fields = cfg.lsp_fields(r) if cfg.lsf.apply else None
        for u, h in zip(users, per_user):
            ch = ChannelRealization(h, cfg.times, cfg.freqs, realization=r, user=u)
            if cfg.lsf.apply:
                setup = cfg.link_setup(r, u, fields)
                sh = float(np.atleast_1d(lsp_at(fields, np.asarray(setup.tx_array.reference_position), np.asarray(setup.rx_array.reference_position), setup.lsp_transforms).shadowing)[0])
                ch = apply_lsf(ch, cfg.lsf_model(u, sh))
            stem = f"channel_r{r:04d}_u{u:02d}"
            if cfg.outputs.channel_csv:
                files.append(io.write_channel_csv(out / f"{stem}.csv", ch))
            if cfg.outputs.binary:
                files.append(io.write_channel_binary(out / f"{stem}.bin", ch))
            if cfg.outputs.figures and r == 0 and u == 0:
                files.append(plotting.plot_channel(cfg.times, cfg.freqs, np.abs(ch.ctf[0, 0]), out / "channel.png", cfg.name))
    return files


def _stats(cfg: ScenarioConfig, out: Path, workers: int) -> list[Path]:
    files = []
    s = cfg.statistics
    curves: dict[str, dict] = {k: {} for k in s.kinds}
    scales = []
    for label, vcfg in cfg.expanded():
        ens = np.stack([t[0] for t in realize_many(vcfg, range(vcfg.realization_count), (0,), workers)])
        t0 = min(s.reference_time_index, ens.shape[3] - 1)
        f0 = min(s.reference_freq_index, ens.shape[4] - 1)
        anchor = (0, 0, t0, f0)
        times, freqs = vcfg.times, vcfg.freqs
        wrapped = [ChannelRealization(a, times, freqs) for a in ens]
        tx_sp = vcfg.tx_array_config().spacing
        rx_sp = vcfg.rx_array_config().spacing
        for kind in s.kinds:
            if kind == "acf":
                res = temporal_acf(wrapped, anchor=anchor)
            elif kind == "fcf":
                res = fcf(wrapped, anchor=anchor)
            elif kind == "ccf":
                res = space_ccf(wrapped, tx_lags=range(vcfg.tx_array.m_count), tx_spacing=tx_sp, anchor=anchor)
            else:
                res = stfcf(wrapped, dt_lags=range(ens.shape[3] - t0), df_lags=range(ens.shape[4] - f0),
                            tx_lags=range(vcfg.tx_array.m_count), rx_lags=range(vcfg.rx_array.m_count),
                            anchor=anchor, tx_spacing=tx_sp, rx_spacing=rx_sp)
            files.append(io.write_stat_csv(out / f"{kind}{_suffix(label)}.csv", res))
            if kind != "stfcf":
                curves[kind][label] = res
                scale = coherence_scale(res, s.threshold)
                scales.append((label, kind, s.threshold, "not_reached" if scale is None else scale, res.realization_count))
    files.append(io.write_csv(out / "coherence.csv", ("variant", "statistic", "threshold", "scale", "realization_count"), scales))
    if cfg.outputs.figures:
        for kind, res in curves.items():
            if res:
                files.append(plotting.plot_correlation(res, out / f"{kind}.png", f"{cfg.name}: {kind.upper()}"))
    return files


def user_matrix(per_user: list[np.ndarray], t: int, b: int) -> np.ndarray:
    """Stack single-antenna users row-wise, each scaled to unit mean entry power."""
    rows = np.stack([h[0, :, t, b] for h in per_user])
    power = np.mean(np.abs(rows) ** 2, axis=1, keepdims=True)
    return rows / np.sqrt(np.where(power > 0, power, 1.0))


def _metrics(cfg: ScenarioConfig, out: Path, workers: int) -> list[Path]:
    files = []
    m = cfg.metrics
    summary = []
    svs_curves, cap_by_variant = {}, {}
    for label, vcfg in cfg.expanded():
        tensors = realize_many(vcfg, range(vcfg.realization_count), range(vcfg.user_count), workers)
        t = min(m.time_index, len(vcfg.times) - 1)
        b = min(m.freq_index, len(vcfg.freqs) - 1)
        mats = [user_matrix(per_user, t, b) for per_user in tensors]
        m_t = mats[0].shape[1]
        suf = _suffix(label)
        row = {"variant": label, "tx_elements": m_t, "users": mats[0].shape[0]}
        if "svs" in m.kinds:
            vals = np.array([svs(h) for h in mats])
            db = 20 * np.log10(vals)
            files.append(io.write_csv(out / f"svs{suf}.csv", ("realization", "svs", "svs_db"), zip(range(len(vals)), vals, db)))
            x, p = cdf(db)
            files.append(io.write_csv(out / f"svs_cdf{suf}.csv", ("value_db", "probability"), zip(x, p)))
            svs_curves[f"{label} (M_T={m_t})"] = (x, p)
            row["median_svs_db"] = float(np.median(db))
        if "capacity" in m.kinds:
            rows, means = [], []
            for snr_db in m.snr_db:
                rho = 10 ** (snr_db / 10)
                caps = [capacity(h if m.link == "downlink" else h.T, rho) for h in mats]
                rows += [(r, snr_db, c) for r, c in enumerate(caps)]
                means.append(float(np.mean(caps)))
                row[f"mean_capacity_{snr_db:g}db"] = means[-1]
            files.append(io.write_csv(out / f"capacity{suf}.csv", ("realization", "snr_db", "capacity_bps_hz"), rows))
            cap_by_variant[m_t] = means
        summary.append(row)
    keys = list(dict.fromkeys(k for r in summary for k in r))
    files.append(io.write_csv(out / "metrics_summary.csv", keys, ([r.get(k, "") for k in keys] for r in summary)))
    if cfg.outputs.figures:
        if svs_curves:
            files.append(plotting.plot_cdf(svs_curves, out / "svs_cdf.png", "SVS (dB)", cfg.name))
        if cap_by_variant:
            ms = sorted(cap_by_variant)
            curves = {f"{s:g} dB": np.array([cap_by_variant[k][i] for k in ms]) for i, s in enumerate(m.snr_db)}
            files.append(plotting.plot_lines(ms, curves, out / "capacity.png", "Tx antennas", f"{m.link} sum rate (bit/s/Hz)", cfg.name))
    return files


def _lsp_map(cfg: ScenarioConfig, out: Path, workers: int) -> list[Path]:
    spec = cfg.lsp_map
    fields = cfg.lsp_fields(0)
    n = int(round(spec.extent_m / spec.resolution_m)) + 1
    axis = np.linspace(-spec.extent_m / 2, spec.extent_m / 2, n)
    xx, yy = np.meshgrid(axis, axis, indexing="xy")
    pos = np.stack([xx.ravel(), yy.ravel(), np.zeros(xx.size)], axis=1)
    g = fields[spec.parameter](pos[:, :2])
    value = cfg.lsp_transforms()[spec.parameter](g)
    files = [io.write_csv(out / "lsp_map.csv", ("x_m", "y_m", "gaussian", spec.parameter), zip(pos[:, 0], pos[:, 1], g, value))]
    if cfg.outputs.figures:
        scale, unit = (1e9, "ns") if spec.parameter == "delay_spread" else (1.0, "")
        label = f"{spec.parameter} ({unit})" if unit else spec.parameter
        files.append(plotting.plot_map(axis, axis, value.reshape(n, n) * scale, out / "lsp_map.png", label, cfg.name))
    return files


def _visibility(cfg: ScenarioConfig, r: int):
    setup = cfg.link_setup(r, 0, fields={})
    ev = setup.evolution
    vis, _ = realize_visibility(
        latent_tx(setup.tx_array, setup.tx_track, setup.times, ev),
        latent_tx(setup.rx_array, setup.rx_track, setup.times, ev),
        latent_freq(setup.freqs, ev),
        ev,
        substream(cfg.seed, "visibility", r, 0),
        slots=setup.slots,
    )
    return vis


def closed_form_sharing(cfg: ScenarioConfig, axis: str, lag: int) -> float:
    """Survival probability between the reference cell and a cell ``lag`` steps along ``axis``."""
    ev = cfg.evolution_params()
    tx, rx = cfg.tx_array_config(), cfg.rx_array_config()
    st, sr = cfg.tx_track.segments[0], cfg.rx_track.segments[0]
    dt = lag * cfg.time_grid.step_s if axis == "time" else 0.0
    dp = lag * tx.spacing if axis == "space" else 0.0
    df = cfg.freqs[lag] - cfg.freqs[0] if axis == "frequency" else 0.0
    return float(survival_prob_total(
        ev, dt, dp, 0.0, df,
        v_t=st.speed_mps * np.cos(st.elevation_rad), alpha_a_t=st.azimuth_rad, beta_a_t=tx.azimuth_tilt, beta_e_t=tx.elevation_tilt,
        v_r=sr.speed_mps * np.cos(sr.elevation_rad), alpha_a_r=sr.azimuth_rad, beta_a_r=rx.azimuth_tilt, beta_e_r=rx.elevation_tilt,
    ))


def _evolution_map(cfg: ScenarioConfig, out: Path, workers: int) -> list[Path]:
    files = []
    vis0 = _visibility(cfg, 0)
    tx = cfg.tx_array_config()
    axes = {
        "space": (np.arange(tx.m_count) * tx.spacing, lambda v: v.tx[:, 0, : tx.m_count] & v.rx[:, 0, :1] & v.freq[:, :1], "Tx antenna position (m)"),
        "time": (cfg.times, lambda v: v.tx[:, :, 0] & v.rx[:, :, 0] & v.freq[:, :1], "Time (s)"),
        "frequency": (cfg.freqs, lambda v: v.tx[:, :1, 0] & v.rx[:, :1, 0] & v.freq, "Frequency offset (Hz)"),
    }
    sharing = []
    visibilities = [vis0] + [_visibility(cfg, r) for r in range(1, cfg.realization_count)]
    for name, (values, select, xlabel) in axes.items():
        mask = select(vis0)
        seen = mask.any(axis=1)
        sub = mask[seen]
        rows = ((j, values[j], int(cid), int(sub[i, j])) for j in range(sub.shape[1]) for i, cid in enumerate(vis0.ids[seen]))
        files.append(io.write_csv(out / f"evolution_{name}.csv", ("axis_index", "axis_value", "cluster_id", "visible"), rows))
        if cfg.outputs.figures:
            files.append(plotting.plot_evolution(values, mask[seen], out / f"evolution_{name}.png", xlabel, f"{cfg.name}: {name}"))
        masks = [select(v) for v in visibilities]
        for lag in range(1, len(values)):
            ref = sum(int(mk[:, 0].sum()) for mk in masks)
            shared = sum(int((mk[:, 0] & mk[:, lag]).sum()) for mk in masks)
            p = closed_form_sharing(cfg, name, lag)
            sigma = np.sqrt(p * (1 - p) / ref) if ref else float("nan")
            sharing.append((name, lag, values[lag], shared, ref, shared / ref if ref else float("nan"), p, sigma))
    files.append(io.write_csv(out / "evolution_sharing.csv",
                              ("axis", "lag_index", "lag_value", "shared", "reference_count", "empirical", "closed_form", "binomial_sigma"), sharing))
    return files


_HANDLERS = {"simulate": _simulate, "stats": _stats, "metrics": _metrics, "lsp-map": _lsp_map, "evolution-map": _evolution_map}


def run(cfg: ScenarioConfig, subcommand: str, out_dir, workers: int = 1) -> dict:
    """Execute a subcommand, writing outputs and ``manifest.json`` to ``out_dir``."""
    if subcommand not in _HANDLERS:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    files = _HANDLERS[subcommand](cfg, out, workers)
    manifest = {
        "subcommand": subcommand,
        "scenario": cfg.name,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "realization_count": cfg.realization_count,
        "versions": _versions(),
        "outputs": sorted(p.name for p in files),
        "wall_time_s": round(time.perf_counter() - start, 3),
        "config": json.loads(cfg.canonical_json()),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
