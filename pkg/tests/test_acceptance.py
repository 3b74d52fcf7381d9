"""Acceptance criteria, each at its stated tolerance and runtime budget."""

import csv
import math
import time

import numpy as np
import pytest
from scipy import integrate

from gbsm.channel import ChannelLink, ChannelRealization, LinkSetup, ctf
from gbsm.config import parse_config
from gbsm.evolution import (
    ClusterPair,
    EvolutionParams,
    evolve_chain,
    expected_new_clusters,
    survival_prob_freq,
    survival_prob_rx,
    survival_prob_total,
    survival_prob_tx,
)
from gbsm.geometry import SPEED_OF_LIGHT, ArrayConfig, MobilityTrack, direction, wavelength
from gbsm.lsp import SosFieldSpec, build_field, target_acf
from gbsm.metrics import capacity
from gbsm.runner import run
from gbsm.statistics import fcf, temporal_acf


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_criterion_01_survival_closed_forms(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(50):
        p = EvolutionParams(
            lambda_g=rng.uniform(1, 40), lambda_r=rng.uniform(0.1, 3), dc_array=rng.uniform(5, 100),
            dc_time=rng.uniform(5, 100), dc_freq=rng.uniform(1e3, 1e5), freq_shape=rng.choice(["sqrt", "linear"]),
        )
        dt, dp, dq, df = rng.uniform(0, 2), rng.uniform(0, 5), rng.uniform(0, 5), rng.uniform(0, 1e7)
        vt, vr = rng.uniform(0, 30, 2)
        at, bt, ar, br = rng.uniform(-math.pi, math.pi, 4)
        et, er = rng.uniform(-math.pi / 2, math.pi / 2, 2)

        # independent oracle: length of the summed 2D displacement vectors
        def side(delta, beta_e, beta_a, v, alpha):
            vec = delta * math.cos(beta_e) / p.dc_array * np.array([math.cos(beta_a), math.sin(beta_a)])
            vec = vec + v * dt / p.dc_time * np.array([math.cos(alpha), math.sin(alpha)])
            return math.exp(-p.lambda_r * math.hypot(*vec))

        f_term = math.sqrt(df) if p.freq_shape == "sqrt" else df
        oracle_t = side(dp, et, bt, vt, at)
        oracle_r = side(dq, er, br, vr, ar)
        oracle_f = math.exp(-p.lambda_r * f_term / p.dc_freq)
        oracle_total = oracle_t * oracle_r * oracle_f
        oracle_new = p.lambda_g / p.lambda_r * (1 - oracle_total)
        got = [
            (survival_prob_tx(p, dt, dp, vt, at, bt, et), oracle_t),
            (survival_prob_rx(p, dt, dq, vr, ar, br, er), oracle_r),
            (survival_prob_freq(p, df), oracle_f),
            (survival_prob_total(p, dt, dp, dq, df, v_t=vt, alpha_a_t=at, beta_a_t=bt, beta_e_t=et,
                                 v_r=vr, alpha_a_r=ar, beta_a_r=br, beta_e_r=er), oracle_total),
            (expected_new_clusters(p, oracle_total), oracle_new),
        ]
        for value, ref in got:
            worst = max(worst, abs(value - ref) / max(abs(ref), 1e-300))
    elapsed = time.perf_counter() - start
    criterion(1, "closed-form survival suite", worst <= 1e-12 and elapsed < 1.0,
              f"max rel err {worst:.2e} (<= 1e-12), {elapsed:.2f} s (< 1 s)")


def test_criterion_02_birth_death_stationarity(criterion):
    start = time.perf_counter()
    params = EvolutionParams(lambda_g=20.0, lambda_r=1.0)
    # survival of one 0.1 s step at 15 m/s
    p = survival_prob_rx(params, 0.1, 0.0, 15.0)
    _, chain = evolve_chain(params, [p] * 10_000, np.random.default_rng(7))
    mean = float(np.mean([len(s) for s in chain[1:]]))
    elapsed = time.perf_counter() - start
    err = abs(mean / 20.0 - 1)
    criterion(2, "birth-death stationary mean", err <= 0.05 and elapsed < 10,
              f"mean count {mean:.3f} vs 20 (rel err {err:.3%} <= 5%), {elapsed:.2f} s (< 10 s)")


def single_ray_link(speed, heading, seed, times):
    lam = wavelength(5.3e9)
    setup = LinkSetup(
        carrier_hz=5.3e9,
        tx_array=ArrayConfig(1, 1, lam / 2),
        rx_array=ArrayConfig(1, 1, lam / 2, reference_position=(200.0, 0.0, 0.0)),
        tx_track=MobilityTrack.static(),
        rx_track=MobilityTrack.constant(speed, heading),
        times=times,
        freqs=[0.0],
        mode="nlos_only",
    )
    z = np.array([200.0, 0.0, 0.0]) + 500.0 * direction(2.0, 0.0)
    cluster = ClusterPair(0, np.array([60.0, 40.0, 0.0]), z, np.zeros((1, 3)), np.zeros((1, 3)), 1e-7, 1.0)
    return ChannelLink(setup, seed, clusters=[cluster]), z


def test_criterion_03_doppler_and_acf_trends(criterion, tmp_path):
    start = time.perf_counter()
    speed, heading = 20.0, 0.4
    times = np.arange(100) * 1e-5
    ens = []
    for r in range(20):
        link, z = single_ray_link(speed, heading, r, times)
        ens.append(link.realize())
    acf = temporal_acf(ens)
    # the path length to the last bounce shrinks at v cos(angle) along the ray
    u = (z - np.array([200.0, 0.0, 0.0])) / np.linalg.norm(z - np.array([200.0, 0.0, 0.0]))
    f_d = speed * float(direction(heading, 0.0) @ u) * 5.3e9 / SPEED_OF_LIGHT
    slope = np.polyfit(acf.lags, np.unwrap(np.angle(acf.values)), 1)[0] / (2 * np.pi)
    doppler_err = abs(slope / f_d - 1)

    cfg = parse_config("fig3_acf")
    run(cfg.with_overrides({"outputs.figures": False}), "stats", tmp_path)
    scale = {r["variant"]: r["scale"] for r in read_rows(tmp_path / "coherence.csv")}
    base, v2, f2 = (float(scale[k]) if scale[k] != "not_reached" else math.inf for k in ("base", "v30", "fc10.6GHz"))
    rc = int(read_rows(tmp_path / "coherence.csv")[0]["realization_count"])
    elapsed = time.perf_counter() - start
    ok = doppler_err <= 1e-3 and v2 < base and f2 < base and rc == 200 and elapsed < 60
    criterion(3, "Doppler ACF oracle and coherence-time trends", ok,
              f"phase slope {slope:.3f} Hz vs f_D {f_d:.3f} Hz (err {doppler_err:.1e} <= 1e-3); "
              f"coherence time {base * 1e3:.3f} ms -> {v2 * 1e3:.3f} ms (2v), {f2 * 1e3:.3f} ms (2f_c), "
              f"{rc} realizations, {elapsed:.1f} s (< 60 s)")


def test_criterion_04_fcf_two_path_and_trend(criterion, tmp_path):
    start = time.perf_counter()
    R, dtau = 200, 25e-9
    freqs = np.arange(101) * 1e6
    rng = np.random.default_rng(11)
    # relative phases stratified over [0, 2 pi): one uniform draw per stratum
    rel = 2 * np.pi * (np.arange(R) + rng.uniform(size=R)) / R
    common = rng.uniform(0, 2 * np.pi, R)
    ens = []
    for r in range(R):
        taps = [(np.exp(1j * common[r]) / np.sqrt(2), 0.0), (np.exp(1j * (common[r] + rel[r])) / np.sqrt(2), dtau)]
        ens.append(ChannelRealization(ctf(taps, freqs)[None, None, None, :], np.zeros(1), freqs))
    res = fcf(ens)
    rmse = float(np.sqrt(np.mean((np.abs(res.values) - np.abs(np.cos(np.pi * res.lags * dtau))) ** 2)))

    cfg = parse_config("fig5_fcf")
    run(cfg.with_overrides({"outputs.figures": False}), "stats", tmp_path)
    scale = {r["variant"]: r["scale"] for r in read_rows(tmp_path / "coherence.csv")}
    bw = [float(scale[k]) if scale[k] != "not_reached" else math.inf for k in ("base", "as5deg", "as7deg")]
    elapsed = time.perf_counter() - start
    ok = rmse <= 0.02 and bw[0] > bw[1] > bw[2] and elapsed < 60
    criterion(4, "two-path FCF oracle and coherence-bandwidth trend", ok,
              f"RMSE {rmse:.4f} (<= 0.02, {R} realizations); coherence bandwidth "
              f"{bw[0] / 1e6:.1f} > {bw[1] / 1e6:.1f} > {bw[2] / 1e6:.1f} MHz for 3/5/7 deg, {elapsed:.1f} s (< 60 s)")


def test_criterion_05_cir_ctf_round_trip(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    bw, n = 200e6, 64
    freqs = np.arange(n) * bw / n
    amps = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
    taps = [(a, k / bw) for k, a in enumerate(amps)]
    h = ctf(taps, freqs)
    back = np.fft.ifft(h)
    err = float(np.max(np.abs(back - amps)) / np.max(np.abs(amps)))
    ch = ChannelRealization.from_delay_form(amps[None, None, None, :], np.zeros(1), freqs)
    err2 = float(np.max(np.abs(ch.ctf[0, 0, 0] - h)) / np.max(np.abs(h)))
    elapsed = time.perf_counter() - start
    worst = max(err, err2)
    criterion(5, "CIR <-> CTF round trip", worst <= 1e-6 and elapsed < 1,
              f"max rel err {worst:.2e} on 64 taps (<= 1e-6), {elapsed:.3f} s (< 1 s)")


def test_criterion_06_sos_field(criterion):
    start = time.perf_counter()
    spec = SosFieldSpec(sinusoid_count=300, corr_distance_gauss=50.0, corr_distance_exp=50.0, mix_weight=0.5, seed=21)
    field = build_field(spec)
    again = build_field(spec)
    rng = np.random.default_rng(3)
    n, extent = 100_000, 20_000.0
    lags = np.linspace(0.0, 150.0, 16)
    d = lags[np.arange(n) % len(lags)]
    p = rng.uniform(0, extent, (n, 2))
    theta = rng.uniform(0, 2 * np.pi, n)
    q = p + d[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    prod = field(p) * field(q)
    emp = np.array([prod[d == lag].mean() for lag in lags])
    rmse = float(np.sqrt(np.mean((emp - target_acf(lags, spec)) ** 2)))
    probe = rng.uniform(-1e3, 1e3, (50, 2))
    deterministic = np.array_equal(field(probe), field(probe)) and np.array_equal(again(probe), field(probe))
    elapsed = time.perf_counter() - start
    criterion(6, "SoS field ACF and determinism", rmse <= 0.05 and deterministic and elapsed < 30,
              f"ACF RMSE {rmse:.4f} over lags 0-150 m (<= 0.05, 1e5 pairs, 300 sinusoids), "
              f"deterministic={deterministic}, {elapsed:.1f} s (< 30 s)")


def test_criterion_07_channel_hardening(criterion, tmp_path):
    start = time.perf_counter()
    cfg = parse_config("fig7_svs")
    run(cfg.with_overrides({"outputs.figures": False}), "metrics", tmp_path)
    rows = read_rows(tmp_path / "metrics_summary.csv")
    med = {int(r["tx_elements"]): float(r["median_svs_db"]) for r in rows}
    users = {int(r["users"]) for r in rows}
    count = len(read_rows(tmp_path / "svs.csv"))
    elapsed = time.perf_counter() - start
    ok = med[32] > med[64] > med[128] and med[128] < 1.5 and users == {4} and count >= 200 and elapsed < 300
    criterion(7, "channel hardening (median SVS)", ok,
              f"median SVS {med[32]:.3f} > {med[64]:.3f} > {med[128]:.3f} dB for M_T 32/64/128, "
              f"{med[128]:.3f} < 1.5 dB, K=4 users, {count} realizations, {elapsed:.1f} s (< 300 s)")


def test_criterion_08_capacity(criterion, tmp_path):
    start = time.perf_counter()
    rho = 10.0
    rng = np.random.default_rng(8)
    h = (rng.standard_normal(100_000) + 1j * rng.standard_normal(100_000)) / np.sqrt(2)
    mc = float(np.mean([capacity(np.array([[x]]), rho) for x in h[:2000]]))
    mc_full = float(np.mean(np.log2(1 + rho * np.abs(h) ** 2)))
    exact, _ = integrate.quad(lambda x: np.log2(1 + rho * x) * np.exp(-x), 0, np.inf)
    err = abs(mc_full / exact - 1)
    consistent = abs(mc - float(np.mean(np.log2(1 + rho * np.abs(h[:2000]) ** 2)))) < 1e-12

    cfg = parse_config("fig8_capacity")
    run(cfg.with_overrides({"outputs.figures": False}), "metrics", tmp_path)
    rows = read_rows(tmp_path / "metrics_summary.csv")
    keys = [k for k in rows[0] if k.startswith("mean_capacity_")]
    rates = {k: [float(r[k]) for r in sorted(rows, key=lambda r: int(r["tx_elements"]))] for k in keys}
    increasing = all(v[0] < v[1] < v[2] for v in rates.values())
    elapsed = time.perf_counter() - start
    ten = rates["mean_capacity_10db"]
    criterion(8, "capacity oracle and uplink sum-rate trend", err <= 0.01 and consistent and increasing and elapsed < 120,
              f"1x1 mean {mc_full:.4f} vs integral {exact:.4f} (err {err:.3%} <= 1%); uplink sum rate at 10 dB "
              f"{ten[0]:.2f} < {ten[1]:.2f} < {ten[2]:.2f} bit/s/Hz for 32/64/128, all SNRs increasing={increasing}, "
              f"{elapsed:.1f} s (< 120 s)")


def test_criterion_09_stf_nonstationarity(criterion, tmp_path):
    start = time.perf_counter()
    details, ok = [], True
    for preset, axis in (("fig6a_space", "space"), ("fig6b_time", "time"), ("fig6c_freq", "frequency")):
        cfg = parse_config(preset)
        out = tmp_path / preset
        run(cfg.with_overrides({"outputs.figures": False}), "evolution-map", out)
        presence = {}
        for r in read_rows(out / f"evolution_{axis}.csv"):
            presence.setdefault(r["cluster_id"], set()).add(r["visible"])
        changes = sum(1 for flags in presence.values() if flags == {"0", "1"})
        share = [r for r in read_rows(out / "evolution_sharing.csv") if r["axis"] == axis][-1]
        emp, p, sigma = float(share["empirical"]), float(share["closed_form"]), float(share["binomial_sigma"])
        trials = cfg.realization_count
        good = changes > 0 and abs(emp - p) <= 3 * sigma and trials >= 500
        ok &= good
        details.append(f"{axis}: {changes} clusters appear/vanish, sharing {emp:.4f} vs {p:.4f} "
                       f"({abs(emp - p) / sigma:.2f} sigma, {trials} trials)")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 60
    criterion(9, "STF non-stationarity evidence", ok, "; ".join(details) + f"; {elapsed:.1f} s (< 60 s)")


@pytest.mark.parametrize("workers", [2])
def test_criterion_10_determinism(criterion, tmp_path, workers):
    start = time.perf_counter()
    commands = {
        "fig2_lsp_map": "lsp-map", "fig3_acf": "stats", "fig4_ccf": "stats", "fig5_fcf": "stats",
        "fig6a_space": "evolution-map", "fig6b_time": "evolution-map", "fig6c_freq": "evolution-map",
        "fig7_svs": "metrics", "fig8_capacity": "metrics",
    }
    mismatched, compared = [], 0
    for preset, command in commands.items():
        cfg = parse_config(preset).with_overrides({"realization_count": 6})
        outs = []
        for i, w in enumerate((1, 1, workers)):
            out = tmp_path / f"{preset}_{i}"
            run(cfg, command, out, workers=w)
            outs.append(out)
        ref = {p.name: p.read_bytes() for p in outs[0].iterdir() if p.name != "manifest.json"}
        compared += len(ref)
        for other in outs[1:]:
            got = {p.name: p.read_bytes() for p in other.iterdir() if p.name != "manifest.json"}
            if got != ref:
                mismatched.append(preset)
    elapsed = time.perf_counter() - start
    criterion(10, "byte-identical reruns across worker counts", not mismatched,
              f"{compared} files per run over {len(commands)} presets, run twice serially and once with {workers} workers; "
              f"mismatches: {mismatched or 'none'}; {elapsed:.1f} s")
