"""Numba-compiled kernels. Same contracts as ``_numpy_impl``."""

import numpy as np
from numba import njit

UNKNOWN = -1


@njit(cache=True)
def _scan_batch(day_codes, home_codes, min_days, rows, starts, ends, dests):
    n_out = 0
    n_users, n_days = day_codes.shape
    for u in range(n_users):
        home = home_codes[u]
        prev_code = -2
        run_start = -1
        run_end = -1
        for i in range(n_days):
            c = day_codes[u, i]
            if c == UNKNOWN:
                continue
            if c == prev_code:
                run_end = i
            else:
                if (
                    prev_code != -2
                    and prev_code != home
                    and c == home
                    and run_end - run_start + 1 >= min_days
                ):
                    rows[n_out] = u
                    starts[n_out] = run_start
                    ends[n_out] = run_end
                    dests[n_out] = prev_code
                    n_out += 1
                prev_code = c
                run_start = i
                run_end = i
    return n_out


def scan_trip_runs_batch(day_codes, home_codes, min_days):
    n_users, n_days = day_codes.shape
    # A qualifying run needs min_days away days plus a return day.
    cap = max(1, n_users * (n_days // (min_days + 1) + 1))
    rows = np.empty(cap, dtype=np.int64)
    starts = np.empty(cap, dtype=np.int64)
    ends = np.empty(cap, dtype=np.int64)
    dests = np.empty(cap, dtype=np.int64)
    n = _scan_batch(
        np.ascontiguousarray(day_codes),
        np.ascontiguousarray(home_codes),
        min_days,
        rows,
        starts,
        ends,
        dests,
    )
    return rows[:n].copy(), starts[:n].copy(), ends[:n].copy(), dests[:n].copy()


@njit(cache=True)
def _accumulate(home_code, dest_code, first_day, last_day, day_month,
                rr_nights, rr_trips, v_trips, v_nights):
    n_trips = len(home_code)
    for t in range(n_trips):
        h = home_code[t]
        d = dest_code[t]
        for day in range(first_day[t], last_day[t] + 1):
            m = day_month[day]
            rr_nights[d, h, m] += 1
            v_nights[h, d, m] += 1
        for m in range(day_month[first_day[t]], day_month[last_day[t]] + 1):
            rr_trips[d, h, m] += 1
            v_trips[h, d, m] += 1


def accumulate_flow_tensors(home_code, dest_code, first_day, last_day, day_month,
                            n_sett, n_months):
    shape = (n_sett, n_sett, n_months)
    rr_nights = np.zeros(shape, dtype=np.int64)
    rr_trips = np.zeros(shape, dtype=np.int64)
    v_trips = np.zeros(shape, dtype=np.int64)
    v_nights = np.zeros(shape, dtype=np.int64)
    if len(home_code) == 0:
        return rr_nights, rr_trips, v_trips, v_nights
    _accumulate(
        np.ascontiguousarray(home_code, dtype=np.int64),
        np.ascontiguousarray(dest_code, dtype=np.int64),
        np.ascontiguousarray(first_day, dtype=np.int64),
        np.ascontiguousarray(last_day, dtype=np.int64),
        np.ascontiguousarray(day_month, dtype=np.int64),
        rr_nights,
        rr_trips,
        v_trips,
        v_nights,
    )
    return rr_nights, rr_trips, v_trips, v_nights
