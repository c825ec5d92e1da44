"""Pure-numpy reference implementations of the hot kernels.

Semantics must match ``_numba_impl`` exactly; the test suite and the
benchmark script compare the two pairwise.
"""

import numpy as np

UNKNOWN = -1


def scan_trip_runs_batch(day_codes, home_codes, min_days):
    """Scan per-user day sequences for qualifying away runs.

    day_codes: (n_users, n_days) int32, settlement code per day, UNKNOWN for
    days without events.  A qualifying run is a maximal block of days at one
    non-home settlement (interior UNKNOWN days absorbed when bracketed by the
    same settlement), spanning >= min_days calendar days, whose next known
    day is the user's home.  Runs cut off by the window edge or followed by a
    different away settlement are dropped.

    Returns (rows, starts, ends, dests) int64 arrays; starts/ends are day
    indices of the first/last actual away day, inclusive.
    """
    rows, starts, ends, dests = [], [], [], []
    n_users, n_days = day_codes.shape
    for u in range(n_users):
        home = home_codes[u]
        seq = day_codes[u]
        prev_code = -2
        run_start = -1
        run_end = -1
        for i in range(n_days):
            c = seq[i]
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
                    rows.append(u)
                    starts.append(run_start)
                    ends.append(run_end)
                    dests.append(prev_code)
                prev_code = c
                run_start = i
                run_end = i
        # A trailing run has no observed return and is discarded.
    return (
        np.asarray(rows, dtype=np.int64),
        np.asarray(starts, dtype=np.int64),
        np.asarray(ends, dtype=np.int64),
        np.asarray(dests, dtype=np.int64),
    )


def accumulate_flow_tensors(home_code, dest_code, first_day, last_day, day_month,
                            n_sett, n_months):
    """Accumulate per-(origin, dest, month) flow tensors from trips.

    Nights are the calendar days first_day..last_day of each trip; day_month
    maps a day index to a month index.  A returning-resident trip (home h,
    destination d) feeds the edge d->h; the same physical trip feeds h->d as
    a visitor trip.  Trip tensors count a trip once per month it touches;
    night tensors count individual nights.

    Returns (rr_nights, rr_trips, v_trips, v_nights) int64 tensors of shape
    (n_sett, n_sett, n_months) indexed [origin, dest, month].
    """
    shape = (n_sett, n_sett, n_months)
    rr_nights = np.zeros(shape, dtype=np.int64)
    rr_trips = np.zeros(shape, dtype=np.int64)
    v_trips = np.zeros(shape, dtype=np.int64)
    v_nights = np.zeros(shape, dtype=np.int64)
    n_trips = len(home_code)
    if n_trips == 0:
        return rr_nights, rr_trips, v_trips, v_nights

    home_code = np.asarray(home_code, dtype=np.int64)
    dest_code = np.asarray(dest_code, dtype=np.int64)
    first_day = np.asarray(first_day, dtype=np.int64)
    last_day = np.asarray(last_day, dtype=np.int64)
    day_month = np.asarray(day_month, dtype=np.int64)

    # Expand each trip into its night days with a repeat/arange trick.
    lens = last_day - first_day + 1
    trip_idx = np.repeat(np.arange(n_trips), lens)
    offsets = np.arange(lens.sum()) - np.repeat(np.cumsum(lens) - lens, lens)
    night_days = first_day[trip_idx] + offsets
    night_months = day_month[night_days]

    flat = (dest_code[trip_idx] * n_sett + home_code[trip_idx]) * n_months + night_months
    rr_nights.ravel()[:] = np.bincount(flat, minlength=rr_nights.size)
    flat_v = (home_code[trip_idx] * n_sett + dest_code[trip_idx]) * n_months + night_months
    v_nights.ravel()[:] = np.bincount(flat_v, minlength=v_nights.size)

    # Months touched per trip form a contiguous month-index range.
    m0 = day_month[first_day]
    m1 = day_month[last_day]
    mlens = m1 - m0 + 1
    trip_idx_m = np.repeat(np.arange(n_trips), mlens)
    moffsets = np.arange(mlens.sum()) - np.repeat(np.cumsum(mlens) - mlens, mlens)
    months = m0[trip_idx_m] + moffsets
    flat = (dest_code[trip_idx_m] * n_sett + home_code[trip_idx_m]) * n_months + months
    rr_trips.ravel()[:] = np.bincount(flat, minlength=rr_trips.size)
    flat_v = (home_code[trip_idx_m] * n_sett + dest_code[trip_idx_m]) * n_months + months
    v_trips.ravel()[:] = np.bincount(flat_v, minlength=v_trips.size)

    return rr_nights, rr_trips, v_trips, v_nights
