"""The numba and numpy kernel implementations must agree exactly."""

import numpy as np
import pytest

from plasmoflow.kernels import _numba_impl, _numpy_impl
from plasmoflow.kernels import UNKNOWN

IMPLS = [_numpy_impl, _numba_impl]


def random_day_matrix(rng, n_users=60, n_days=40, n_sett=5):
    m = rng.integers(-1, n_sett, size=(n_users, n_days)).astype(np.int32)
    homes = rng.integers(0, n_sett, size=n_users).astype(np.int32)
    return m, homes


def test_scan_agrees_across_backends():
    rng = np.random.default_rng(99)
    for _ in range(20):
        m, homes = random_day_matrix(rng)
        a = _numpy_impl.scan_trip_runs_batch(m, homes, 2)
        b = _numba_impl.scan_trip_runs_batch(m, homes, 2)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)


def test_scan_min_days_three():
    rng = np.random.default_rng(7)
    m, homes = random_day_matrix(rng)
    a = _numpy_impl.scan_trip_runs_batch(m, homes, 3)
    b = _numba_impl.scan_trip_runs_batch(m, homes, 3)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_scan_empty_matrix():
    m = np.full((3, 10), UNKNOWN, dtype=np.int32)
    homes = np.zeros(3, dtype=np.int32)
    for impl in IMPLS:
        rows, starts, ends, dests = impl.scan_trip_runs_batch(m, homes, 2)
        assert len(rows) == 0


@pytest.mark.parametrize("n_trips", [0, 1, 500])
def test_accumulate_agrees_across_backends(n_trips):
    rng = np.random.default_rng(5)
    n_sett, n_days, n_months = 8, 70, 3
    day_month = np.repeat(np.arange(n_months), np.ceil(n_days / n_months))[:n_days]
    home = rng.integers(0, n_sett, size=n_trips)
    dest = (home + rng.integers(1, n_sett, size=n_trips)) % n_sett
    first = rng.integers(0, n_days - 10, size=n_trips)
    last = first + rng.integers(0, 9, size=n_trips)
    results = [
        impl.accumulate_flow_tensors(home, dest, first, last, day_month, n_sett, n_months)
        for impl in IMPLS
    ]
    for x, y in zip(*results):
        np.testing.assert_array_equal(x, y)


def test_accumulate_counts_one_trip():
    # 3 nights across a month boundary: nights split 2 + 1, trip counted in both
    day_month = np.array([0, 0, 1, 1])
    for impl in IMPLS:
        rr_n, rr_t, v_t, v_n = impl.accumulate_flow_tensors(
            np.array([0]), np.array([1]), np.array([1]), np.array([3]), day_month, 2, 2
        )
        assert rr_n[1, 0, 0] == 1 and rr_n[1, 0, 1] == 2
        assert v_n[0, 1, 0] == 1 and v_n[0, 1, 1] == 2
        assert rr_t[1, 0, 0] == 1 and rr_t[1, 0, 1] == 1
        assert v_t[0, 1, 0] == 1 and v_t[0, 1, 1] == 1
