import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gbsm.evolution import (
    ClusterGenParams,
    ClusterRegistry,
    EvolutionParams,
    evolve,
    evolve_chain,
    expected_new_clusters,
    latent_freq,
    latent_tx,
    realize_visibility,
    spawn_cluster,
    survival_prob_freq,
    survival_prob_rx,
    survival_prob_total,
    survival_prob_tx,
)
from gbsm.geometry import ArrayConfig, MobilityTrack
from gbsm.lsp import LspSample

P = EvolutionParams()


def test_identity_step_survives():
    assert survival_prob_tx(P, 0.0, 0.0) == 1.0


def test_array_step_hand_value():
    assert survival_prob_tx(P, 0.0, 2.0, beta_e_t=0.0) == pytest.approx(np.exp(-0.05))
    assert survival_prob_tx(P, 0.0, 2.0) == pytest.approx(0.95123, abs=1e-5)


def test_time_step_hand_value():
    assert survival_prob_tx(P, 0.4, 0.0, v_t=10.0) == pytest.approx(0.90484, abs=1e-5)


def test_opposing_displacements_cancel():
    # eps1 = eps2 = 0.1 with alpha - beta = pi
    p = survival_prob_tx(P, 0.4, 4.0, v_t=10.0, alpha_a_t=np.pi, beta_a_t=0.0)
    assert p == pytest.approx(1.0, abs=1e-6)


def test_rx_mirrors_tx():
    args = (0.3, 1.5, 7.0, 0.2, 0.7, 0.1)
    assert survival_prob_rx(P, *args) == survival_prob_tx(P, *args)


def test_frequency_survival():
    lin = EvolutionParams(dc_freq=1e4, freq_shape="linear")
    assert survival_prob_freq(lin, 0.0) == 1.0
    assert survival_prob_freq(lin, 1e4) == pytest.approx(0.36788, abs=1e-5)
    with pytest.raises(ValueError):
        survival_prob_freq(lin, -1.0)


def test_total_is_product():
    tot = survival_prob_total(P, 0.2, 1.0, 2.0, 5e5, v_t=3.0, v_r=12.0, alpha_a_r=0.3)
    parts = survival_prob_tx(P, 0.2, 1.0, 3.0) * survival_prob_rx(P, 0.2, 2.0, 12.0, 0.3) * survival_prob_freq(P, 5e5)
    assert tot == pytest.approx(parts, rel=1e-12)
    assert survival_prob_total(P, 0, 0, 0, 0) == 1.0


def test_expected_births():
    assert expected_new_clusters(P, 1.0) == 0.0
    assert expected_new_clusters(P, 0.0) == 20.0
    assert expected_new_clusters(P, np.exp(-0.05)) == pytest.approx(20 * (1 - np.exp(-0.05)), rel=1e-12)
    assert expected_new_clusters(P, np.exp(-0.05)) == pytest.approx(0.9754, abs=1e-4)
    with pytest.raises(ValueError):
        expected_new_clusters(P, 1.2)


def test_params_validation():
    with pytest.raises(ValueError):
        EvolutionParams(lambda_r=0.0)
    with pytest.raises(ValueError):
        EvolutionParams(freq_shape="cubic")


nonneg = st.floats(0, 100, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(nonneg, nonneg, nonneg, st.floats(0, 50), st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi))
def test_survival_bounded_and_monotone(dt, dp, df, v, alpha, beta):
    p = survival_prob_total(P, dt, dp, dp, df, v_t=v, alpha_a_t=alpha, beta_a_t=beta, v_r=v)
    assert 0.0 <= p <= 1.0
    assert survival_prob_freq(P, df + 1.0) <= survival_prob_freq(P, df)
    assert survival_prob_tx(P, dt, dp + 0.5) <= survival_prob_tx(P, dt, dp) + 1e-15
    assert survival_prob_tx(P, dt + 0.5, dp, v_t=v) <= survival_prob_tx(P, dt, dp, v_t=v) + 1e-15


def test_evolve_identity_and_total_turnover(rng):
    reg = ClusterRegistry()
    state = frozenset(reg.spawn(rng) for _ in range(15))
    assert evolve(reg, state, 1.0, P, rng) == state
    nxt = evolve(reg, state, 0.0, P, rng)
    assert not (nxt & state)


def test_evolve_replays():
    a = evolve_chain(P, [0.9] * 50, np.random.default_rng(5))[1]
    b = evolve_chain(P, [0.9] * 50, np.random.default_rng(5))[1]
    assert a == b


def test_stationary_mean_count():
    _, chain = evolve_chain(P, [0.9] * 10_000, np.random.default_rng(2))
    counts = np.array([len(s) for s in chain[200:]])
    assert counts.mean() == pytest.approx(20.0, rel=0.05)


def test_spawn_cluster_invariants(rng):
    lsp = LspSample(50e-9, 0.1, 0.1, 0.05, 0.05, 0.0, 1.0)
    c = spawn_cluster(3, rng, np.zeros(3), np.array([100.0, 0, 0]), ClusterGenParams(), lsp)
    assert c.ray_count >= 1 and c.virtual_delay >= 0 and c.mean_power >= 0
    assert c.scatterers_a.shape == (c.ray_count, 3)
    assert c.positions_a([0.0, 1.0]).shape == (2, c.ray_count, 3)


def _grid(m_count=64, speed=0.0, times=(0.0,), freqs=(0.0,), params=P, seed=0):
    lam = 3e8 / 5.3e9
    tx = ArrayConfig(m_count, 1, lam / 2)
    rx = ArrayConfig(1, 1, lam / 2)
    return realize_visibility(
        latent_tx(tx, MobilityTrack.static(), times, params),
        latent_tx(rx, MobilityTrack.constant(speed), times, params),
        latent_freq(freqs, params),
        params,
        np.random.default_rng(seed),
    )


def test_visibility_replay():
    a, ba = _grid(seed=3)
    b, bb = _grid(seed=3)
    assert np.array_equal(a.tx, b.tx) and ba == bb


def test_visibility_ids_are_registered():
    vis, births = _grid(m_count=8, times=np.linspace(0, 1, 5), speed=10.0)
    assert len(births) == len(vis)
    for cell in [(0, 0, 0, 0), (7, 0, 4, 0)]:
        assert vis[cell] <= set(vis.ids.tolist())


def test_space_sharing_matches_survival():
    lam = 3e8 / 5.3e9
    params = EvolutionParams(dc_array=4.0)
    shared = ref = 0
    k = 100
    for s in range(300):
        vis, _ = _grid(m_count=k + 1, params=params, seed=s)
        shared += int((vis.tx[:, 0, 0] & vis.tx[:, 0, k]).sum())
        ref += int(vis.tx[:, 0, 0].sum())
    p = survival_prob_tx(params, 0.0, k * lam / 2)
    sigma = np.sqrt(p * (1 - p) / ref)
    assert abs(shared / ref - p) <= 3 * sigma


def test_births_are_poisson_mean():
    lam = 3e8 / 5.3e9
    params = EvolutionParams(dc_array=4.0)
    new = []
    for s in range(300):
        vis, _ = _grid(m_count=41, params=params, seed=s)
        new.append(int((~vis.tx[:, 0, 0] & vis.tx[:, 0, 40]).sum()))
    p = survival_prob_tx(params, 0.0, 40 * lam / 2)
    expected = expected_new_clusters(params, p)
    assert np.mean(new) == pytest.approx(expected, abs=3 * np.sqrt(expected / len(new)))
