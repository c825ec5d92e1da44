"""Per-user mobility inference.

Home is where a user is most active at night and on weekends over a trailing
window; the daily most-used settlement sequence is compared against home to
find closed trips: at least ``min_trip_days`` consecutive days at one other
settlement, followed by an observed return home.  Nights away are attributed
to the location of the preceding day, so a trip's night dates are exactly
its away days.

Two API levels: per-user operations over ``CdrRecord`` lists (the contract
surface, convenient for tests) and table-level functions over the parsed
event frame (the pipeline hot path, shared kernels underneath).
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import pandas as pd

from .config import MobilityConfig
from .ingest import CdrRecord
from .kernels import UNKNOWN, scan_trip_runs_batch


class DailyLocation(NamedTuple):
    user: str
    day: dt.date
    settlement: str | None   # None means Unknown (no events that day)
    event_count: int


@dataclass
class HomeAssignment:
    user: str
    home: str | None          # None means Unassigned
    window_start: dt.date
    window_end: dt.date
    score: int                # home-indicative event count of the winner


class Trip(NamedTuple):
    user: str
    home: str
    destination: str
    first_away_day: dt.date
    last_away_day: dt.date
    nights_away: int
    night_dates: tuple[dt.date, ...]


@dataclass
class TripMatrix:
    month: str                                  # YYYY-MM
    counts: dict[tuple[str, str], int]          # (home, destination) -> trips


def local_series(ts: pd.Series, tz_offset_hours: float) -> pd.Series:
    return ts + pd.Timedelta(hours=tz_offset_hours)


def is_night_hour(hours: np.ndarray, night_start: int, night_end: int) -> np.ndarray:
    if night_start <= night_end:
        return (hours >= night_start) & (hours < night_end)
    return (hours >= night_start) | (hours < night_end)


def _events_frame(events: Iterable[CdrRecord], tower_to_settlement: dict[str, str]) -> pd.DataFrame:
    rows = list(events)
    if not rows:
        return pd.DataFrame({"user": [], "ts": pd.Series(dtype="datetime64[ns]"), "settlement": []})
    users = {r.user for r in rows}
    if len(users) > 1:
        raise ValueError(f"events of multiple users passed to a per-user operation: {sorted(users)[:3]}")
    return pd.DataFrame(
        {
            "user": [r.user for r in rows],
            "ts": pd.to_datetime([r.timestamp for r in rows]),
            "settlement": [tower_to_settlement[r.tower] for r in rows],
        }
    )


def daily_most_used(
    events: Iterable[CdrRecord],
    tower_to_settlement: dict[str, str],
    tz_offset_hours: float,
    window: tuple[dt.date, dt.date] | None = None,
) -> list[DailyLocation]:
    """Daily most-used settlement for one user.

    Ties go to the settlement of the latest event that day, then to the
    smallest settlement id.  Every day of ``window`` (default: the user's
    first to last active day) is emitted; days without events come back as
    Unknown with event_count 0.
    """
    df = _events_frame(events, tower_to_settlement)
    if df.empty and window is None:
        return []
    user = df["user"].iloc[0] if not df.empty else ""
    if df.empty:
        return [
            DailyLocation(user, d, None, 0) for d in _date_range(window[0], window[1])
        ]
    local = local_series(df["ts"], tz_offset_hours)
    df = df.assign(day=local.dt.date)
    if window is None:
        window = (df["day"].min(), df["day"].max())

    grouped = (
        df.groupby(["day", "settlement"], as_index=False)
        .agg(count=("ts", "size"), last_ts=("ts", "max"))
    )
    winners: dict[dt.date, tuple[str, int]] = {}
    for day, sub in grouped.groupby("day"):
        cands = list(zip(sub["count"], sub["last_ts"], sub["settlement"]))
        top = max(c for c, _, _ in cands)
        cands = [c for c in cands if c[0] == top]
        latest = max(ts for _, ts, _ in cands)
        winner = min(s for _, ts, s in cands if ts == latest)
        winners[day] = (winner, int(top))

    out = []
    for day in _date_range(window[0], window[1]):
        if day in winners:
            sett, n = winners[day]
            out.append(DailyLocation(user, day, sett, n))
        else:
            out.append(DailyLocation(user, day, None, 0))
    return out


def infer_home(
    events: Iterable[CdrRecord],
    tower_to_settlement: dict[str, str],
    window: tuple[dt.date, dt.date],
    tz_offset_hours: float,
    night: tuple[int, int] = (18, 6),
    min_score: int = 5,
) -> HomeAssignment:
    """Home settlement for one user over the home window.

    Home-indicative events are those in the local night range on any day,
    plus all events on Saturday or Sunday (an event that is both counts
    once).  Ties break by larger total event count in the window, then by
    smallest settlement id.  A winner scoring below ``min_score`` leaves the
    user Unassigned.
    """
    df = _events_frame(events, tower_to_settlement)
    user = df["user"].iloc[0] if not df.empty else ""
    if df.empty:
        return HomeAssignment(user, None, window[0], window[1], 0)

    local = local_series(df["ts"], tz_offset_hours)
    day = local.dt.date
    in_window = (day >= window[0]) & (day <= window[1])
    df = df[in_window]
    local = local[in_window]
    if df.empty:
        return HomeAssignment(user, None, window[0], window[1], 0)

    night_mask = is_night_hour(local.dt.hour.to_numpy(), night[0], night[1])
    weekend_mask = local.dt.dayofweek.to_numpy() >= 5
    indicative = night_mask | weekend_mask

    totals = df.groupby("settlement").size()
    scores = df[indicative].groupby("settlement").size()
    if scores.empty or scores.max() < min_score:
        return HomeAssignment(user, None, window[0], window[1], int(scores.max()) if len(scores) else 0)
    top = int(scores.max())
    cands = [s for s in scores.index if scores[s] == top]
    best_total = max(totals.get(s, 0) for s in cands)
    best = min(s for s in cands if totals.get(s, 0) == best_total)
    return HomeAssignment(user, best, window[0], window[1], top)


def detect_trips(
    days: Sequence[DailyLocation],
    home: str,
    min_trip_days: int = 2,
) -> list[Trip]:
    """Closed trips from one user's contiguous daily-location sequence.

    Interior Unknown days bracketed by the same settlement are absorbed;
    leading and trailing Unknowns never extend a run.  A run qualifies only
    when its next known day is home ("eventually returned"); runs cut off by
    the window edge or followed by a different away settlement are dropped.
    """
    if not days:
        return []
    for a, b in zip(days, days[1:]):
        if (b.day - a.day).days != 1:
            raise ValueError(f"day sequence not contiguous at {a.day} -> {b.day}")

    settlements = sorted({d.settlement for d in days if d.settlement is not None} | {home})
    code = {s: i for i, s in enumerate(settlements)}
    seq = np.array(
        [code[d.settlement] if d.settlement is not None else UNKNOWN for d in days],
        dtype=np.int32,
    )
    _, starts, ends, dests = scan_trip_runs_batch(
        seq.reshape(1, -1), np.array([code[home]], dtype=np.int32), min_trip_days
    )
    user = days[0].user
    start_day = days[0].day
    trips = []
    for s, e, d in zip(starts, ends, dests):
        first = start_day + dt.timedelta(days=int(s))
        last = start_day + dt.timedelta(days=int(e))
        nights = tuple(_date_range(first, last))
        trips.append(Trip(user, home, settlements[d], first, last, len(nights), nights))
    return trips


def aggregate_trips(trips: Iterable[Trip], month: str) -> TripMatrix:
    """Trips between settlement pairs for one month.

    A trip counts toward every month at least one of its nights falls in,
    so a trip spanning a month boundary appears in both months.
    """
    counts: dict[tuple[str, str], int] = {}
    for trip in trips:
        if any(d.strftime("%Y-%m") == month for d in trip.night_dates):
            key = (trip.home, trip.destination)
            counts[key] = counts.get(key, 0) + 1
    return TripMatrix(month=month, counts=counts)


def _date_range(start: dt.date, end: dt.date) -> list[dt.date]:
    return [start + dt.timedelta(days=i) for i in range((end - start).days + 1)]


# ---------------------------------------------------------------------------
# Table-level pipeline path.  Same semantics as the per-user operations, but
# vectorized across all users of a shard; settlement ids are pre-coded in
# lexicographic order so "smallest id" tie rules become "smallest code".
# ---------------------------------------------------------------------------


def daily_locations_table(
    events: pd.DataFrame,
    tower_code: dict[str, int],
    window_start: dt.date,
    n_days: int,
    tz_offset_hours: float,
) -> pd.DataFrame:
    """Winning settlement per (user, day) with its event count.

    Returns columns user, day_idx, sett_code, count; days without events
    are simply absent (the matrix builder fills UNKNOWN).
    """
    if events.empty:
        return pd.DataFrame({"user": [], "day_idx": [], "sett_code": [], "count": []})
    local = local_series(events["ts"], tz_offset_hours)
    day_idx = (
        (local.dt.normalize() - pd.Timestamp(window_start)) // pd.Timedelta(days=1)
    ).to_numpy()
    sett = events["tower"].map(tower_code).to_numpy()
    keep = (day_idx >= 0) & (day_idx < n_days)
    df = pd.DataFrame(
        {
            "user": events["user"].to_numpy()[keep],
            "day_idx": day_idx[keep],
            "sett_code": sett[keep],
            "ts": events["ts"].to_numpy()[keep],
        }
    )
    if df.empty:
        return pd.DataFrame({"user": [], "day_idx": [], "sett_code": [], "count": []})
    grouped = (
        df.groupby(["user", "day_idx", "sett_code"], as_index=False, sort=True)
        .agg(count=("ts", "size"), last_ts=("ts", "max"))
    )
    order = np.lexsort(
        (
            -grouped["sett_code"].to_numpy(),
            grouped["last_ts"].to_numpy(),
            grouped["count"].to_numpy(),
            grouped["day_idx"].to_numpy(),
            grouped["user"].to_numpy(),
        )
    )
    g = grouped.iloc[order].reset_index(drop=True)
    key_user = g["user"].to_numpy()
    key_day = g["day_idx"].to_numpy()
    is_last = np.ones(len(g), dtype=bool)
    is_last[:-1] = (key_user[:-1] != key_user[1:]) | (key_day[:-1] != key_day[1:])
    winners = g[is_last]
    return winners[["user", "day_idx", "sett_code", "count"]].reset_index(drop=True)


def infer_homes_table(
    events: pd.DataFrame,
    tower_code: dict[str, int],
    window: tuple[dt.date, dt.date],
    tz_offset_hours: float,
    cfg: MobilityConfig,
) -> pd.DataFrame:
    """Home settlement code per user (columns user, home_code, score)."""
    if events.empty:
        return pd.DataFrame({"user": [], "home_code": [], "score": []})
    local = local_series(events["ts"], tz_offset_hours)
    day = local.dt.normalize()
    in_window = (day >= pd.Timestamp(window[0])) & (day <= pd.Timestamp(window[1]))
    df = pd.DataFrame(
        {
            "user": events["user"].to_numpy()[in_window],
            "sett_code": events["tower"].map(tower_code).to_numpy()[in_window],
        }
    )
    if df.empty:
        return pd.DataFrame({"user": [], "home_code": [], "score": []})
    local = local[in_window]
    indicative = is_night_hour(local.dt.hour.to_numpy(), cfg.night_start, cfg.night_end) | (
        local.dt.dayofweek.to_numpy() >= 5
    )
    totals = df.groupby(["user", "sett_code"], as_index=False).size().rename(columns={"size": "total"})
    scores = (
        df[indicative]
        .groupby(["user", "sett_code"], as_index=False)
        .size()
        .rename(columns={"size": "score"})
    )
    merged = totals.merge(scores, on=["user", "sett_code"], how="left").fillna({"score": 0})
    merged["score"] = merged["score"].astype(np.int64)
    order = np.lexsort(
        (
            -merged["sett_code"].to_numpy(),
            merged["total"].to_numpy(),
            merged["score"].to_numpy(),
            merged["user"].to_numpy(),
        )
    )
    m = merged.iloc[order].reset_index(drop=True)
    users = m["user"].to_numpy()
    is_last = np.ones(len(m), dtype=bool)
    is_last[:-1] = users[:-1] != users[1:]
    winners = m[is_last]
    winners = winners[winners["score"] >= cfg.min_home_score]
    return winners[["user", "sett_code", "score"]].rename(columns={"sett_code": "home_code"}).reset_index(drop=True)


def day_code_matrix(
    daily: pd.DataFrame, users: Sequence[str], n_days: int
) -> np.ndarray:
    """Dense (n_users, n_days) settlement-code matrix, UNKNOWN-filled."""
    matrix = np.full((len(users), n_days), UNKNOWN, dtype=np.int32)
    if daily.empty:
        return matrix
    user_idx = {u: i for i, u in enumerate(users)}
    rows = daily["user"].map(user_idx).to_numpy()
    matrix[rows, daily["day_idx"].to_numpy(dtype=np.int64)] = daily["sett_code"].to_numpy(
        dtype=np.int32
    )
    return matrix


def detect_trips_table(
    matrix: np.ndarray,
    home_codes: np.ndarray,
    users: Sequence[str],
    settlement_ids: Sequence[str],
    window_start: dt.date,
    min_trip_days: int,
) -> list[Trip]:
    """Kernel-backed trip detection across a shard's users."""
    rows, starts, ends, dests = scan_trip_runs_batch(
        matrix, np.asarray(home_codes, dtype=np.int32), min_trip_days
    )
    trips = []
    for u, s, e, d in zip(rows, starts, ends, dests):
        first = window_start + dt.timedelta(days=int(s))
        last = window_start + dt.timedelta(days=int(e))
        nights = tuple(_date_range(first, last))
        trips.append(
            Trip(
                users[u],
                settlement_ids[home_codes[u]],
                settlement_ids[d],
                first,
                last,
                len(nights),
                nights,
            )
        )
    return trips
