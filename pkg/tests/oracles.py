"""Independent reference implementations used as test oracles.

Everything here is deliberately written the dumb way (row-by-row loops,
explicit quantifiers, shapely point-in-polygon) and shares no code with the
library paths it checks.
"""

from __future__ import annotations

import datetime as dt
from collections import Counter, defaultdict


def parse_cdr_lines(lines, known_towers, window=None, tz_offset_hours=0.0):
    """Row-by-row CDR parse; returns list of (raw_user, ts, tower, event) and
    a Counter of reject reasons.  Check order matches the documented one."""
    kinds = {"call_in", "call_out", "sms_in", "sms_out", "data"}
    accepted, rejects = [], Counter()
    for line in lines:
        fields = line.split(",")
        if len(fields) != 4:
            rejects["bad_row"] += 1
            continue
        user, ts_raw, tower, event = fields
        if user == "":
            rejects["empty_user"] += 1
            continue
        try:
            ts = dt.datetime.strptime(ts_raw, "%Y-%m-%dT%H:%M:%SZ")
        except ValueError:
            rejects["bad_timestamp"] += 1
            continue
        if tower not in known_towers:
            rejects["unknown_tower"] += 1
            continue
        if event not in kinds:
            rejects["bad_event"] += 1
            continue
        if window is not None:
            local_day = (ts + dt.timedelta(hours=tz_offset_hours)).date()
            if not (window[0] <= local_day <= window[1]):
                rejects["out_of_window"] += 1
                continue
        accepted.append((user, ts, tower, event))
    return accepted, rejects


def nearest_tower(lon, lat, towers):
    """towers: list of (tower_id, lon, lat); planar lon/lat metric, ties to
    the smallest tower id."""
    best = None
    for tid, tlon, tlat in towers:
        d2 = (lon - tlon) ** 2 + (lat - tlat) ** 2
        if best is None or d2 < best[0] - 1e-18 or (abs(d2 - best[0]) <= 1e-18 and tid < best[1]):
            best = (d2, tid)
    return best[1]


def assign_population_by_polygon(cells, catchments, region):
    """Point-in-polygon accumulation; boundary ties resolved by nearest
    tower then smallest id.  cells: iterable of (lon, lat, pop)."""
    from shapely.geometry import Point

    sums = defaultdict(float)
    orphan = 0.0
    towers = [(c.tower, c.lon, c.lat) for c in catchments]
    for lon, lat, pop in cells:
        p = Point(lon, lat)
        if not region.covers(p):
            orphan += pop
            continue
        containing = [c for c in catchments if c.polygon.covers(p)]
        if len(containing) == 1:
            sums[containing[0].tower] += pop
        else:
            sums[nearest_tower(lon, lat, towers)] += pop
    return dict(sums), orphan


def transitive_urban_groups(items, threshold, link_km, dist_fn):
    """items: list of (tower_id, density, lat, lon).  Brute-force transitive
    closure of the pairwise urban-linking predicate."""
    urban = {t for t, d, _, _ in items if d >= threshold}
    adj = defaultdict(set)
    for t1, _, la1, lo1 in items:
        for t2, _, la2, lo2 in items:
            if t1 != t2 and t1 in urban and t2 in urban and dist_fn(la1, lo1, la2, lo2) <= link_km:
                adj[t1].add(t2)
                adj[t2].add(t1)
    seen, groups = set(), []
    for t, _, _, _ in items:
        if t in seen:
            continue
        stack, comp = [t], set()
        while stack:
            x = stack.pop()
            if x in comp:
                continue
            comp.add(x)
            stack.extend(adj[x] - comp)
        seen |= comp
        groups.append(sorted(comp))
    return sorted(groups, key=lambda g: g[0])


def majority_district(groups, mapping):
    out = {}
    for group in groups:
        votes = Counter(mapping[t] for t in group)
        top = max(votes.values())
        out[min(group)] = min(d for d, n in votes.items() if n == top)
    return out


def daily_winners(events, tz_offset_hours):
    """events: list of (ts_utc, settlement).  Returns {local_date: (settlement, count)}."""
    per_day = defaultdict(list)
    for ts, sett in events:
        per_day[(ts + dt.timedelta(hours=tz_offset_hours)).date()].append((ts, sett))
    out = {}
    for day, evs in per_day.items():
        counts = Counter(s for _, s in evs)
        top = max(counts.values())
        cands = [s for s, n in counts.items() if n == top]
        latest = {s: max(ts for ts, s2 in evs if s2 == s) for s in cands}
        best_ts = max(latest.values())
        out[day] = (min(s for s in cands if latest[s] == best_ts), top)
    return out


def home_recount(events, window, tz_offset_hours, night, min_score):
    """events: list of (ts_utc, settlement).  Reference home inference."""
    indicative, totals = Counter(), Counter()
    for ts, sett in events:
        local = ts + dt.timedelta(hours=tz_offset_hours)
        if not (window[0] <= local.date() <= window[1]):
            continue
        totals[sett] += 1
        hour = local.hour
        night_hit = (hour >= night[0] or hour < night[1]) if night[0] > night[1] else (night[0] <= hour < night[1])
        if night_hit or local.weekday() >= 5:
            indicative[sett] += 1
    if not indicative or max(indicative.values()) < min_score:
        return None
    top = max(indicative.values())
    cands = [s for s, n in indicative.items() if n == top]
    best_total = max(totals[s] for s in cands)
    return min(s for s in cands if totals[s] == best_total)


def enumerate_trips(days, home, min_days=2):
    """Declarative trip enumerator over a day sequence.

    days: list of settlement ids or None (Unknown).  A triple (i, j, B) is a
    trip iff: days[i] == days[j] == B != home; every interior day is B or
    Unknown; the last known day before i is not B (left-maximal); the first
    known day after j is home (observed return, right-maximal); and the span
    j - i + 1 >= min_days.  Returns [(i, j, B)] in order.
    """
    n = len(days)
    prev_known = [None] * n
    last = None
    for i in range(n):
        prev_known[i] = last
        if days[i] is not None:
            last = i
    next_known = [None] * n
    nxt = None
    for i in range(n - 1, -1, -1):
        next_known[i] = nxt
        if days[i] is not None:
            nxt = i

    out = []
    for i in range(n):
        b = days[i]
        if b is None or b == home:
            continue
        p = prev_known[i]
        if p is not None and days[p] == b:
            continue
        for j in range(i, n):
            if days[j] != b:
                if days[j] is not None:
                    break  # a different known settlement interrupts every longer span
                continue
            if j - i + 1 < min_days:
                continue
            q = next_known[j]
            if q is None or days[q] != home:
                continue
            out.append((i, j, b))
    return out


def edge_risks(trips, incidence_get, rr_weight=1.0, v_weight=1.0, visitor_mode="per_trip"):
    """Per-night accumulation of edge flows from Trip objects.

    Returns {(origin, dest, month): [trips_rr, trips_v, rr_risk, v_risk]}.
    """
    edges = {}
    for t in trips:
        by_month = defaultdict(list)
        for d in t.night_dates:
            by_month[d.strftime("%Y-%m")].append(d)
        for month, nights in sorted(by_month.items()):
            rr = edges.setdefault((t.destination, t.home, month), [0, 0, 0.0, 0.0])
            rr[0] += 1
            rr[2] += rr_weight * len(nights) * incidence_get(t.destination, month)
            v = edges.setdefault((t.home, t.destination, month), [0, 0, 0.0, 0.0])
            v[1] += 1
            units = 1 if visitor_mode == "per_trip" else len(nights)
            v[3] += v_weight * units * incidence_get(t.home, month)
    return edges


def trip_matrix(trips, month):
    counts = Counter()
    for t in trips:
        if any(d.strftime("%Y-%m") == month for d in t.night_dates):
            counts[(t.home, t.destination)] += 1
    return dict(counts)
