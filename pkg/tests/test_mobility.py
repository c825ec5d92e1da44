import datetime as dt
import itertools

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import mk_trip
from oracles import daily_winners, enumerate_trips, home_recount, trip_matrix
from plasmoflow.ingest import CdrRecord
from plasmoflow.config import MobilityConfig
from plasmoflow.mobility import (
    DailyLocation,
    aggregate_trips,
    daily_locations_table,
    daily_most_used,
    day_code_matrix,
    detect_trips,
    detect_trips_table,
    infer_home,
    infer_homes_table,
)

TOWER_MAP = {"t1": "S1", "t2": "S2", "t3": "S3"}
TZ = 2.0

MON = dt.date(2025, 1, 6)  # a Monday


def ev(user, day, hour, tower, minute=0):
    """Event at local day/hour, stored as UTC."""
    local = dt.datetime.combine(day, dt.time(hour, minute))
    return CdrRecord(user, local - dt.timedelta(hours=TZ), tower, "call_out")


class TestDailyMostUsed:
    def test_all_events_one_settlement(self):
        events = [ev("u", MON + dt.timedelta(days=d), 9, "t1") for d in range(5)]
        days = daily_most_used(events, TOWER_MAP, TZ)
        assert all(d.settlement == "S1" and d.event_count == 1 for d in days)

    def test_tie_broken_by_latest_event(self):
        events = (
            [ev("u", MON, h, "t1") for h in (8, 9, 10)]
            + [ev("u", MON, h, "t2") for h in (7, 11, 12)]
        )
        days = daily_most_used(events, TOWER_MAP, TZ)
        assert days == [DailyLocation("u", MON, "S2", 3)]

    def test_double_tie_breaks_to_smallest_id(self):
        events = [ev("u", MON, 8, "t2"), ev("u", MON, 8, "t1")]
        days = daily_most_used(events, TOWER_MAP, TZ)
        assert days[0].settlement == "S1"

    def test_gap_days_emit_unknown(self):
        events = [ev("u", MON, 9, "t1"), ev("u", MON + dt.timedelta(days=2), 9, "t2")]
        days = daily_most_used(events, TOWER_MAP, TZ)
        assert [d.settlement for d in days] == ["S1", None, "S2"]
        assert days[1].event_count == 0

    def test_matches_counting_oracle_over_month(self):
        rng = np.random.default_rng(8)
        events = []
        for _ in range(300):
            day = MON + dt.timedelta(days=int(rng.integers(0, 30)))
            events.append(ev("u", day, int(rng.integers(0, 24)), f"t{rng.integers(1, 4)}", int(rng.integers(0, 60))))
        days = daily_most_used(events, TOWER_MAP, TZ)
        expected = daily_winners(
            [(e.timestamp, TOWER_MAP[e.tower]) for e in events], TZ
        )
        for d in days:
            if d.settlement is None:
                assert d.day not in expected
            else:
                assert expected[d.day] == (d.settlement, d.event_count)

    def test_local_midnight_boundary(self):
        # 23:30 UTC is 01:30 local the NEXT day at +2h
        rec = CdrRecord("u", dt.datetime(2025, 1, 6, 23, 30), "t1", "data")
        days = daily_most_used([rec], TOWER_MAP, TZ)
        assert days == [DailyLocation("u", dt.date(2025, 1, 7), "S1", 1)]

    def test_rejects_multiple_users(self):
        with pytest.raises(ValueError):
            daily_most_used([ev("a", MON, 9, "t1"), ev("b", MON, 9, "t1")], TOWER_MAP, TZ)


WINDOW = (MON, MON + dt.timedelta(days=59))


class TestInferHome:
    def test_single_settlement_user(self):
        events = [ev("u", MON + dt.timedelta(days=d), 20, "t1") for d in range(10)]
        home = infer_home(events, TOWER_MAP, WINDOW, TZ)
        assert home.home == "S1" and home.score == 10

    def test_below_threshold_unassigned(self):
        # weekday daytime only: zero home-indicative events
        events = [ev("u", MON + dt.timedelta(days=d), 10, "t1") for d in range(4)]
        home = infer_home(events, TOWER_MAP, WINDOW, TZ)
        assert home.home is None and home.score == 0

    def test_spec_weekend_night_scenario(self):
        sat = MON + dt.timedelta(days=5)
        weekend = [ev("u", sat + dt.timedelta(days=14 * k), 10, "t1", m) for k in range(2) for m in range(5)]
        assert len(weekend) == 10
        nights = [ev("u", MON + dt.timedelta(days=1 + 7 * (k % 8)), 22, "t2", k) for k in range(8)]
        weekdays = [ev("u", MON + dt.timedelta(days=2 + (k % 40) + (2 if (MON + dt.timedelta(days=2 + k % 40)).weekday() >= 5 else 0)), 10, "t2", k) for k in range(50)]
        weekdays = [e for e in weekdays if (e.timestamp + dt.timedelta(hours=TZ)).weekday() < 5][:50]
        events = weekend + nights + weekdays
        home = infer_home(events, TOWER_MAP, WINDOW, TZ)
        assert home.home == "S1" and home.score == 10
        # dropping 3 weekend events flips the winner: 7 < 8
        home2 = infer_home(weekend[:-3] + nights + weekdays, TOWER_MAP, WINDOW, TZ)
        assert home2.home == "S2" and home2.score == 8

    def test_tie_broken_by_total_events(self):
        # 5 night events each at S1 and S2; S2 has more daytime events
        events = (
            [ev("u", MON + dt.timedelta(days=d), 20, "t1") for d in range(5)]
            + [ev("u", MON + dt.timedelta(days=d), 21, "t2") for d in range(5)]
            + [ev("u", MON + dt.timedelta(days=d), 10, "t2") for d in range(3)]
        )
        home = infer_home(events, TOWER_MAP, WINDOW, TZ)
        assert home.home == "S2"

    def test_events_outside_window_ignored(self):
        inside = [ev("u", MON + dt.timedelta(days=d), 20, "t1") for d in range(6)]
        outside = [ev("u", MON - dt.timedelta(days=d + 1), 20, "t2") for d in range(30)]
        home = infer_home(inside + outside, TOWER_MAP, WINDOW, TZ)
        assert home.home == "S1"

    def test_empty_window(self):
        home = infer_home([], TOWER_MAP, WINDOW, TZ)
        assert home.home is None and home.score == 0

    def test_matches_recount_oracle(self):
        rng = np.random.default_rng(13)
        events = []
        for _ in range(400):
            day = MON + dt.timedelta(days=int(rng.integers(0, 60)))
            events.append(ev("u", day, int(rng.integers(0, 24)), f"t{rng.integers(1, 4)}", int(rng.integers(0, 60))))
        home = infer_home(events, TOWER_MAP, WINDOW, TZ)
        expected = home_recount(
            [(e.timestamp, TOWER_MAP[e.tower]) for e in events], WINDOW, TZ, (18, 6), 5
        )
        assert home.home == expected


def day_seq(symbols, start=MON, user="u"):
    """Build a DailyLocation list from symbols like ['A','B',None,...]."""
    return [
        DailyLocation(user, start + dt.timedelta(days=i), s, 0 if s is None else 1)
        for i, s in enumerate(symbols)
    ]


class TestDetectTrips:
    def test_never_leaves_home(self):
        assert detect_trips(day_seq(["A"] * 5), "A") == []

    def test_single_away_day_is_not_a_trip(self):
        assert detect_trips(day_seq(["A", "B", "A"]), "A") == []

    def test_unknown_absorption(self):
        trips = detect_trips(day_seq(["A", "B", "B", None, "B", "A"]), "A")
        assert len(trips) == 1
        t = trips[0]
        assert t.destination == "B"
        assert t.nights_away == 4
        assert t.night_dates == tuple(MON + dt.timedelta(days=d) for d in (1, 2, 3, 4))
        assert (t.first_away_day, t.last_away_day) == (MON + dt.timedelta(days=1), MON + dt.timedelta(days=4))

    def test_open_run_at_window_edge_discarded(self):
        assert detect_trips(day_seq(["A", "B", "B"]), "A") == []
        assert detect_trips(day_seq(["A", "B", "B", None]), "A") == []

    def test_consecutive_away_settlements(self):
        # B-run followed by C, only C's run has an observed return
        trips = detect_trips(day_seq(["A", "B", "B", "C", "C", "A"]), "A")
        assert [(t.destination, t.nights_away) for t in trips] == [("C", 2)]

    def test_return_through_unknown(self):
        trips = detect_trips(day_seq(["A", "B", "B", None, "A"]), "A")
        assert [(t.destination, t.nights_away) for t in trips] == [("B", 2)]

    def test_non_contiguous_days_rejected(self):
        days = day_seq(["A", "B"])
        days[1] = days[1]._replace(day=MON + dt.timedelta(days=5))
        with pytest.raises(ValueError):
            detect_trips(days, "A")

    def test_matches_enumerator_exhaustively_length_6(self):
        symbols = ["A", "B", "C", None]
        for combo in itertools.product(symbols, repeat=6):
            got = detect_trips(day_seq(list(combo)), "A")
            expected = enumerate_trips(list(combo), "A")
            assert [(int((t.first_away_day - MON).days), int((t.last_away_day - MON).days), t.destination) for t in got] == expected, combo

    def test_trip_invariants_on_random_sequences(self):
        rng = np.random.default_rng(3)
        symbols = ["A", "B", "C", None]
        for _ in range(200):
            seq = [symbols[i] for i in rng.integers(0, 4, size=20)]
            days = day_seq(seq)
            trips = detect_trips(days, "A")
            covered = set()
            for t in trips:
                assert t.destination != "A"
                assert t.nights_away == len(t.night_dates) >= 2
                assert t.nights_away == (t.last_away_day - t.first_away_day).days + 1
                for d in t.night_dates:
                    assert d not in covered
                    covered.add(d)
                    sym = seq[(d - MON).days]
                    assert sym in (t.destination, None)
                # observed return: next known day after the run is home
                idx = (t.last_away_day - MON).days + 1
                while idx < len(seq) and seq[idx] is None:
                    idx += 1
                assert idx < len(seq) and seq[idx] == "A"


@settings(max_examples=300, deadline=None)
@given(st.lists(st.sampled_from(["A", "B", "C", None]), min_size=1, max_size=16))
def test_detect_trips_equals_enumerator_property(seq):
    got = detect_trips(day_seq(seq), "A")
    expected = enumerate_trips(seq, "A")
    assert [
        (int((t.first_away_day - MON).days), int((t.last_away_day - MON).days), t.destination)
        for t in got
    ] == expected


class TestAggregateTrips:
    def test_empty(self):
        assert aggregate_trips([], "2025-01").counts == {}

    def test_month_boundary_double_count(self):
        trip = mk_trip("u", "A", "B", dt.date(2025, 1, 30), 4)  # nights Jan 30 - Feb 2
        jan = aggregate_trips([trip], "2025-01")
        feb = aggregate_trips([trip], "2025-02")
        assert jan.counts == {("A", "B"): 1}
        assert feb.counts == {("A", "B"): 1}

    def test_matches_groupby_oracle(self):
        rng = np.random.default_rng(19)
        setts = [f"S{i}" for i in range(6)]
        trips = []
        for i in range(200):
            h, d = rng.choice(6, size=2, replace=False)
            trips.append(
                mk_trip(f"u{i}", setts[h], setts[d], dt.date(2025, 1, 2) + dt.timedelta(days=int(rng.integers(0, 80))), int(rng.integers(2, 9)))
            )
        for month in ("2025-01", "2025-02", "2025-03"):
            assert aggregate_trips(trips, month).counts == trip_matrix(trips, month)


class TestTablePath:
    """The vectorized shard path must agree with the per-user operations."""

    def frame(self, events):
        return pd.DataFrame(
            {
                "user": [e.user for e in events],
                "ts": pd.to_datetime([e.timestamp for e in events]),
                "tower": [e.tower for e in events],
                "event": [e.event for e in events],
            }
        )

    def test_daily_table_matches_per_user_op(self):
        rng = np.random.default_rng(29)
        events = []
        for u in ("alice", "bob", "carol"):
            for _ in range(120):
                day = MON + dt.timedelta(days=int(rng.integers(0, 30)))
                events.append(ev(u, day, int(rng.integers(0, 24)), f"t{rng.integers(1, 4)}", int(rng.integers(0, 60))))
        sett_ids = sorted(set(TOWER_MAP.values()))
        tower_code = {t: sett_ids.index(s) for t, s in TOWER_MAP.items()}
        table = daily_locations_table(self.frame(events), tower_code, MON, 30, TZ)
        for u in ("alice", "bob", "carol"):
            per_user = daily_most_used([e for e in events if e.user == u], TOWER_MAP, TZ, (MON, MON + dt.timedelta(days=29)))
            sub = table[table["user"] == u].set_index("day_idx")
            for d in per_user:
                idx = (d.day - MON).days
                if d.settlement is None:
                    assert idx not in sub.index
                else:
                    assert sett_ids[int(sub.loc[idx, "sett_code"])] == d.settlement
                    assert int(sub.loc[idx, "count"]) == d.event_count

    def test_homes_table_matches_per_user_op(self):
        rng = np.random.default_rng(31)
        events = []
        for u in ("alice", "bob"):
            for _ in range(200):
                day = MON + dt.timedelta(days=int(rng.integers(0, 60)))
                events.append(ev(u, day, int(rng.integers(0, 24)), f"t{rng.integers(1, 4)}", int(rng.integers(0, 60))))
        sett_ids = sorted(set(TOWER_MAP.values()))
        tower_code = {t: sett_ids.index(s) for t, s in TOWER_MAP.items()}
        table = infer_homes_table(self.frame(events), tower_code, WINDOW, TZ, MobilityConfig())
        for u in ("alice", "bob"):
            expected = infer_home([e for e in events if e.user == u], TOWER_MAP, WINDOW, TZ)
            row = table[table["user"] == u]
            if expected.home is None:
                assert row.empty
            else:
                assert sett_ids[int(row["home_code"].iloc[0])] == expected.home
                assert int(row["score"].iloc[0]) == expected.score

    def test_trips_table_matches_per_user_op(self):
        rng = np.random.default_rng(37)
        sett_ids = ["S1", "S2", "S3"]
        users = ["alice", "bob", "carol", "dave"]
        n_days = 25
        matrix = rng.integers(-1, 3, size=(len(users), n_days)).astype(np.int32)
        homes = rng.integers(0, 3, size=len(users)).astype(np.int32)
        trips = detect_trips_table(matrix, homes, users, sett_ids, MON, 2)
        for ui, u in enumerate(users):
            symbols = [sett_ids[c] if c >= 0 else None for c in matrix[ui]]
            expected = detect_trips(day_seq(symbols, user=u), sett_ids[homes[ui]])
            got = [t for t in trips if t.user == u]
            assert got == expected
