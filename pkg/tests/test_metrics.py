import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gbsm.metrics import INFINITE_SPREAD, capacity, cdf, svs, svs_db


def random_matrix(rng, k, m):
    return rng.standard_normal((k, m)) + 1j * rng.standard_normal((k, m))


def test_svs_examples(rng):
    q, _ = np.linalg.qr(random_matrix(rng, 4, 4))
    assert svs(q) == pytest.approx(1.0)
    assert svs_db(q) == pytest.approx(0.0, abs=1e-9)
    assert svs(np.diag([4.0, 2.0])) == pytest.approx(2.0)
    assert svs_db(np.diag([4.0, 2.0])) == pytest.approx(6.0206, abs=1e-4)


def test_svs_against_eigen_oracle(rng):
    h = random_matrix(rng, 3, 5)
    eig = np.sqrt(np.linalg.eigvalsh(h @ h.conj().T))
    assert svs(h) == pytest.approx(eig.max() / eig.min(), rel=1e-9)


def test_svs_rank_deficient():
    assert svs(np.array([[1.0, 2.0], [2.0, 4.0]])) == INFINITE_SPREAD
    with pytest.raises(ValueError):
        svs(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        svs(np.ones((3, 2)))


def test_capacity_examples():
    assert capacity(np.zeros((2, 2)), 10.0) == 0.0
    assert capacity(np.eye(2), 2.0) == pytest.approx(2.0)
    assert capacity(np.array([[1.0]]), 3.0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        capacity(np.array([[np.nan]]), 1.0)
    with pytest.raises(ValueError):
        capacity(np.eye(2), -1.0)


def test_cdf_examples():
    x, p = cdf([5])
    assert list(zip(x, p)) == [(5.0, 1.0)]
    x, p = cdf([1, 2, 2, 4])
    assert p[list(x).index(2.0)] == 0.75
    with pytest.raises(ValueError):
        cdf([])


def test_cdf_of_normal_at_zero():
    v = np.random.default_rng(0).standard_normal(10_000)
    x, p = cdf(v)
    at0 = p[np.searchsorted(x, 0.0, side="right") - 1]
    assert abs(at0 - 0.5) <= 3 * np.sqrt(0.25 / len(v))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 4), st.floats(0.1, 10.0), st.floats(-np.pi, np.pi), st.integers(0, 2**31))
def test_svs_and_capacity_invariances(k, extra, scale, angle, seed):
    rng = np.random.default_rng(seed)
    h = random_matrix(rng, k, k + extra)
    s = svs(h)
    assert s >= 1.0
    assert svs(scale * np.exp(1j * angle) * h) == pytest.approx(s, rel=1e-10)
    u, _ = np.linalg.qr(random_matrix(rng, k, k))
    v, _ = np.linalg.qr(random_matrix(rng, k + extra, k + extra))
    c = capacity(h, 5.0)
    assert capacity(u @ h @ v, 5.0) == pytest.approx(c, abs=1e-9)
    assert capacity(h, 6.0) >= c
