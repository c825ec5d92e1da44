"""Synthetic corpus generator with ground truth.

Builds a labeled world end to end: towers clustered into cities, a
population grid with urban cores, districts, agents with true homes who
take gravity-model trips, a Poisson event stream biased toward the true
current location at night and on weekends, and monthly incidence.  Files
come out in exactly the CSV formats the pipeline ingests, so a generated
corpus exercises the parsers too.  Same seed, same bytes.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .config import GeographyConfig
from .errors import BadConfigError
from . import geography
from .mobility import is_night_hour


@dataclass
class SynthConfig:
    seed: int = 42
    n_towers: int = 25
    n_users: int = 500
    n_days: int = 90
    start_day: str = "2025-01-06"
    lon_min: float = 27.5
    lon_max: float = 28.5
    lat_min: float = -16.5
    lat_max: float = -15.5
    n_districts: int = 4
    grid_nx: int = 70
    grid_ny: int = 70
    trip_start_prob: float = 0.02
    trip_duration_mean: float = 3.0
    gravity_exponent: float = 1.5
    events_per_day_mean: float = 3.0
    night_home_bias: float = 0.9
    day_location_bias: float = 0.65
    min_away_event_prob: float = 0.9
    incidence_base_mean: float = 0.01
    incidence_month_jitter: float = 0.3
    low_incidence_fraction: float = 0.2
    tz_offset_hours: float = 2.0
    night_start: int = 18
    night_end: int = 6
    geography: GeographyConfig = field(default_factory=GeographyConfig)

    def validate(self):
        if self.n_towers < 1 or self.n_users < 1 or self.n_days < 1:
            raise BadConfigError("n_towers, n_users and n_days must be >= 1")
        for name in ("trip_start_prob", "night_home_bias", "day_location_bias",
                     "min_away_event_prob", "low_incidence_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise BadConfigError(f"{name} must be in [0, 1]", value=v)
        if self.trip_duration_mean < 1.0:
            raise BadConfigError("trip_duration_mean must be >= 1")
        if self.events_per_day_mean <= 0:
            raise BadConfigError("events_per_day_mean must be > 0")
        return self


def synth_config_from_dict(data: dict) -> SynthConfig:
    data = dict(data)
    geo = data.pop("geography", None)
    cfg = SynthConfig(**data)
    if geo:
        cfg.geography = GeographyConfig(**geo)
    return cfg.validate()


@dataclass
class GroundTruth:
    homes: dict[str, str]                  # raw user id -> settlement id
    trips: list[dict]                      # user, destination, first/last away day, away_days
    population: dict[str, float]           # settlement id -> persons
    districts: dict[str, str]              # settlement id -> district id


def generate(cfg: SynthConfig, out_dir: str | Path) -> GroundTruth:
    """Write a full corpus under out_dir and return its ground truth."""
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    start = dt.date.fromisoformat(cfg.start_day)
    end = start + dt.timedelta(days=cfg.n_days - 1)

    tower_ids, tower_lon, tower_lat, city_centers = _place_towers(cfg, rng)
    _write_region(cfg, out)
    towers_df = pd.DataFrame({"tower_id": tower_ids, "lat": tower_lat, "lon": tower_lon})
    towers_df.to_csv(out / "towers.csv", index=False)

    grid = _population_grid(cfg, rng, city_centers, tower_lon, tower_lat)
    grid.to_csv(out / "population.csv", index=False)

    district_of_tower = _assign_districts(cfg, rng, tower_ids, tower_lon, tower_lat)
    pd.DataFrame(
        {"tower_id": tower_ids, "district_id": [district_of_tower[t] for t in tower_ids]}
    ).to_csv(out / "districts.csv", index=False)

    settlements = _derive_settlements(cfg, out, towers_df, grid)
    sett_ids = [s.id for s in settlements]
    sett_pop = np.array([s.population for s in settlements])
    tower_of_sett = {s.id: list(s.towers) for s in settlements}

    homes, trips, day_state = _simulate_agents(cfg, rng, sett_ids, sett_pop, settlements)
    events = _emit_events(cfg, rng, day_state, homes, sett_ids, tower_of_sett, start)
    _write_cdr_files(events, out)

    months = _window_months(start, end)
    _write_incidence(cfg, rng, sett_ids, sett_pop, months, out)

    user_ids = [f"u{i:07d}" for i in range(cfg.n_users)]
    truth = GroundTruth(
        homes={user_ids[i]: sett_ids[h] for i, h in enumerate(homes)},
        trips=[
            {
                "user": user_ids[t["user"]],
                "destination": sett_ids[t["dest"]],
                "first_away_day": str(start + dt.timedelta(days=t["first"])),
                "last_away_day": str(start + dt.timedelta(days=t["last"])),
                "away_days": t["last"] - t["first"] + 1,
            }
            for t in trips
        ],
        population={s.id: s.population for s in settlements},
        districts={s.id: s.district for s in settlements},
    )
    (out / "ground_truth.json").write_text(
        json.dumps(asdict(truth), sort_keys=True, indent=2) + "\n"
    )
    _write_pipeline_config(cfg, out, start, end)
    return truth


def _place_towers(cfg: SynthConfig, rng: np.random.Generator):
    span_lon = cfg.lon_max - cfg.lon_min
    span_lat = cfg.lat_max - cfg.lat_min
    n_cities = max(1, cfg.n_towers // 6)
    centers = np.column_stack(
        [
            cfg.lon_min + span_lon * (0.1 + 0.8 * rng.random(n_cities)),
            cfg.lat_min + span_lat * (0.1 + 0.8 * rng.random(n_cities)),
        ]
    )
    lon, lat = [], []
    per_city = rng.integers(2, 5, size=n_cities)
    for c in range(n_cities):
        take = min(int(per_city[c]), cfg.n_towers - len(lon))
        if take <= 0:
            break
        # ~0.015 deg is about 1.6 km at these latitudes, comfortably inside
        # the default 5 km link radius
        lon.extend(centers[c, 0] + rng.normal(0, 0.015, take))
        lat.extend(centers[c, 1] + rng.normal(0, 0.015, take))
    n_rural = cfg.n_towers - len(lon)
    lon.extend(cfg.lon_min + span_lon * (0.05 + 0.9 * rng.random(n_rural)))
    lat.extend(cfg.lat_min + span_lat * (0.05 + 0.9 * rng.random(n_rural)))
    lon = np.clip(np.array(lon), cfg.lon_min + 1e-4, cfg.lon_max - 1e-4)
    lat = np.clip(np.array(lat), cfg.lat_min + 1e-4, cfg.lat_max - 1e-4)
    while pd.DataFrame({"lon": lon, "lat": lat}).duplicated().any():
        dup = pd.DataFrame({"lon": lon, "lat": lat}).duplicated().to_numpy()
        lon[dup] += rng.normal(0, 1e-4, dup.sum())
    ids = [f"T{i:03d}" for i in range(cfg.n_towers)]
    return ids, lon, lat, centers


def _write_region(cfg: SynthConfig, out: Path):
    ring = pd.DataFrame(
        {
            "lon": [cfg.lon_min, cfg.lon_max, cfg.lon_max, cfg.lon_min],
            "lat": [cfg.lat_min, cfg.lat_min, cfg.lat_max, cfg.lat_max],
        }
    )
    ring.to_csv(out / "region.csv", index=False)


def _population_grid(cfg, rng, centers, tower_lon, tower_lat) -> pd.DataFrame:
    xs = np.linspace(cfg.lon_min, cfg.lon_max, cfg.grid_nx + 2)[1:-1]
    ys = np.linspace(cfg.lat_min, cfg.lat_max, cfg.grid_ny + 2)[1:-1]
    gx, gy = np.meshgrid(xs, ys)
    gx, gy = gx.ravel(), gy.ravel()
    pop = np.full(gx.shape, 0.05)
    # Masses scale with the urban density threshold and the mean catchment
    # area, so city catchments land well above the threshold and rural ones
    # well below it regardless of region size or tower count.
    mid_lat = 0.5 * (cfg.lat_min + cfg.lat_max)
    region_km2 = (
        (cfg.lon_max - cfg.lon_min) * 111.32 * np.cos(np.deg2rad(mid_lat))
        * (cfg.lat_max - cfg.lat_min) * 110.57
    )
    area_per_tower = region_km2 / cfg.n_towers
    threshold = cfg.geography.density_threshold
    city_mass = threshold * area_per_tower * rng.lognormal(np.log(8.0), 0.3, size=len(centers))
    for c in range(len(centers)):
        d2 = (gx - centers[c, 0]) ** 2 + (gy - centers[c, 1]) ** 2
        sigma = 0.025
        pop += city_mass[c] * np.exp(-d2 / (2 * sigma**2)) / (2 * np.pi * sigma**2 / _cell_area(cfg))
    rural_mass = threshold * area_per_tower * rng.lognormal(np.log(0.05), 0.4, size=len(tower_lon))
    for t in range(len(tower_lon)):
        d2 = (gx - tower_lon[t]) ** 2 + (gy - tower_lat[t]) ** 2
        sigma = 0.06
        pop += rural_mass[t] * np.exp(-d2 / (2 * sigma**2)) / (2 * np.pi * sigma**2 / _cell_area(cfg))
    return pd.DataFrame({"lon": gx, "lat": gy, "population": np.round(pop, 3)})


def _cell_area(cfg) -> float:
    # degrees-squared per grid cell; keeps bump masses roughly equal to the
    # configured totals when integrated over the grid
    return ((cfg.lon_max - cfg.lon_min) / cfg.grid_nx) * ((cfg.lat_max - cfg.lat_min) / cfg.grid_ny)


def _assign_districts(cfg, rng, tower_ids, tower_lon, tower_lat) -> dict[str, str]:
    seeds = np.column_stack(
        [
            cfg.lon_min + (cfg.lon_max - cfg.lon_min) * rng.random(cfg.n_districts),
            cfg.lat_min + (cfg.lat_max - cfg.lat_min) * rng.random(cfg.n_districts),
        ]
    )
    d2 = (tower_lon[:, None] - seeds[None, :, 0]) ** 2 + (tower_lat[:, None] - seeds[None, :, 1]) ** 2
    nearest = d2.argmin(axis=1)
    return {t: f"D{int(d):02d}" for t, d in zip(tower_ids, nearest)}


def _derive_settlements(cfg, out, towers_df, grid):
    region = geography.load_region(out / "region.csv")
    catchments = geography.compute_catchments(towers_df, region)
    catchments, _ = geography.assign_population(catchments, grid, region)
    groups = geography.estimate_urban_extents(
        catchments, cfg.geography.density_threshold, cfg.geography.link_distance_km
    )
    mapping = geography.load_district_mapping(out / "districts.csv")
    districts, _ = geography.load_districts(groups, mapping)
    return geography.build_settlements(catchments, groups, districts)


def _simulate_agents(cfg, rng, sett_ids, sett_pop, settlements):
    """Day-state simulation: returns homes, completed trips, and the
    (n_users, n_days) settlement-code matrix of true locations."""
    n_sett = len(sett_ids)
    weights = np.maximum(sett_pop, 1e-9)
    homes = rng.choice(n_sett, size=cfg.n_users, p=weights / weights.sum())

    lons = np.array([s.lon for s in settlements])
    lats = np.array([s.lat for s in settlements])
    if n_sett > 1:
        dist = geography.haversine_km(lats[:, None], lons[:, None], lats[None, :], lons[None, :])
        np.fill_diagonal(dist, np.inf)
        grav = weights[None, :] / np.maximum(dist, 1.0) ** cfg.gravity_exponent
        np.fill_diagonal(grav, 0.0)
        grav_cum = np.cumsum(grav / grav.sum(axis=1, keepdims=True), axis=1)
    else:
        grav_cum = np.ones((1, 1))  # nowhere to go

    day_state = np.empty((cfg.n_users, cfg.n_days), dtype=np.int32)
    remaining = np.zeros(cfg.n_users, dtype=np.int64)
    current_dest = np.full(cfg.n_users, -1, dtype=np.int64)
    trip_first = np.full(cfg.n_users, -1, dtype=np.int64)
    trips = []
    for day in range(cfg.n_days):
        at_home = remaining == 0
        # returns complete when an away user's counter hits zero at home
        returned = at_home & (current_dest >= 0)
        for u in np.nonzero(returned)[0]:
            trips.append(
                {"user": int(u), "dest": int(current_dest[u]), "first": int(trip_first[u]), "last": day - 1}
            )
        current_dest[returned] = -1
        trip_first[returned] = -1

        # no back-to-back restart: the return day is spent at home
        starters = at_home & ~returned & (rng.random(cfg.n_users) < cfg.trip_start_prob)
        if n_sett < 2:
            starters[:] = False
        if starters.any():
            idx = np.nonzero(starters)[0]
            u01 = rng.random(len(idx))
            dests = np.array(
                [np.searchsorted(grav_cum[homes[u]], r) for u, r in zip(idx, u01)], dtype=np.int64
            )
            durations = rng.geometric(1.0 / cfg.trip_duration_mean, size=len(idx))
            remaining[idx] = durations
            current_dest[idx] = dests
            trip_first[idx] = day

        away = remaining > 0
        day_state[:, day] = np.where(away, current_dest, homes).astype(np.int32)
        remaining[away] -= 1
    # trips still open at the window edge never returned; they are not truth
    return homes, trips, day_state


def _emit_events(cfg, rng, day_state, homes, sett_ids, tower_of_sett, start: dt.date):
    n_users, n_days = day_state.shape
    counts = rng.poisson(cfg.events_per_day_mean, size=(n_users, n_days))
    away = day_state != homes[:, None].astype(np.int32)
    floor = (counts == 0) & away & (rng.random(counts.shape) < cfg.min_away_event_prob)
    counts[floor] = 1

    total = int(counts.sum())
    user_idx = np.repeat(np.arange(n_users), counts.sum(axis=1))
    day_idx = np.repeat(np.tile(np.arange(n_days), n_users), counts.ravel())
    true_sett = day_state[user_idx, day_idx]

    hours = rng.integers(0, 24, size=total)
    minutes = rng.integers(0, 60, size=total)
    seconds = rng.integers(0, 60, size=total)
    weekday = (np.asarray([(start + dt.timedelta(days=int(d))).weekday() for d in range(n_days)]))[day_idx]
    night = is_night_hour(hours, cfg.night_start, cfg.night_end)
    bias = np.where(night | (weekday >= 5), cfg.night_home_bias, cfg.day_location_bias)
    noise = rng.random(total) >= bias
    sett = np.where(noise, rng.integers(0, len(sett_ids), size=total), true_sett)

    tower_flat, offsets, counts_per_sett = _tower_lookup(sett_ids, tower_of_sett)
    pick = (rng.random(total) * counts_per_sett[sett]).astype(np.int64)
    towers = tower_flat[offsets[sett] + pick]

    days64 = np.asarray(
        [start + dt.timedelta(days=int(d)) for d in range(n_days)], dtype="datetime64[D]"
    )
    local = days64[day_idx].astype("datetime64[s]") + (
        hours * 3600 + minutes * 60 + seconds
    ).astype("timedelta64[s]")
    utc = local - np.timedelta64(int(cfg.tz_offset_hours * 3600), "s")
    return pd.DataFrame(
        {
            "user_id": np.array([f"u{i:07d}" for i in range(n_users)], dtype=object)[user_idx],
            "timestamp": np.char.add(utc.astype(str), "Z"),
            "tower_id": towers,
            "event_type": _event_kinds(rng, total),
        }
    )


def _tower_lookup(sett_ids, tower_of_sett):
    flat, offsets, counts = [], [], []
    pos = 0
    for s in sett_ids:
        ts = sorted(tower_of_sett[s])
        offsets.append(pos)
        counts.append(len(ts))
        flat.extend(ts)
        pos += len(ts)
    return np.array(flat, dtype=object), np.array(offsets), np.array(counts)


def _event_kinds(rng, total):
    kinds = np.array(["call_in", "call_out", "sms_in", "sms_out", "data"], dtype=object)
    probs = np.array([0.22, 0.26, 0.16, 0.16, 0.20])
    return kinds[rng.choice(len(kinds), size=total, p=probs)]


def _write_cdr_files(events: pd.DataFrame, out: Path):
    cdr_dir = out / "cdr"
    cdr_dir.mkdir(exist_ok=True)
    events = events.sort_values(["timestamp", "user_id", "tower_id"], kind="mergesort")
    for month, sub in events.groupby(events["timestamp"].str[:7], sort=True):
        sub.to_csv(cdr_dir / f"cdr_{month}.csv", index=False)


def _window_months(start: dt.date, end: dt.date) -> list[str]:
    months = []
    d = start
    while d <= end:
        m = d.strftime("%Y-%m")
        if m not in months:
            months.append(m)
        d += dt.timedelta(days=1)
    return months


def _write_incidence(cfg, rng, sett_ids, sett_pop, months, out: Path):
    base = rng.lognormal(np.log(cfg.incidence_base_mean), 1.0, size=len(sett_ids))
    low = rng.random(len(sett_ids)) < cfg.low_incidence_fraction
    base[low] *= 0.01
    base = np.clip(base, 0.0, 0.2)
    rows = []
    for mi, month in enumerate(months):
        factor = 1.0 + cfg.incidence_month_jitter * (2 * rng.random(len(sett_ids)) - 1)
        cases = rng.poisson(np.maximum(base * factor, 0.0) * np.maximum(sett_pop, 0.0))
        for s, c in zip(sett_ids, cases):
            rows.append({"settlement_id": s, "month": month, "cases": int(c)})
    pd.DataFrame(rows).to_csv(out / "incidence.csv", index=False)


def _write_pipeline_config(cfg: SynthConfig, out: Path, start: dt.date, end: dt.date):
    data = {
        "inputs": {
            "cdr": sorted(str(p.relative_to(out)) for p in (out / "cdr").glob("cdr_*.csv")),
            "towers": "towers.csv",
            "region": "region.csv",
            "population": "population.csv",
            "districts": "districts.csv",
            "incidence": "incidence.csv",
        },
        "window": {"start": str(start), "end": str(end)},
        "tz_offset_hours": cfg.tz_offset_hours,
        "geography": asdict(cfg.geography),
    }
    (out / "pipeline_config.json").write_text(json.dumps(data, indent=2) + "\n")
