"""End-to-end pipeline: ingest -> geography -> mobility -> riskflow -> snapshot.

Users are partitioned into shards and processed shard by shard; every
reduction merges in sorted key order, so the published CSVs are
byte-identical for any shard count and across reruns on the same inputs.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import hashlib
import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from . import geography, mobility, riskflow
from .config import PipelineConfig
from .errors import BadFileError
from .ingest import (
    RejectReport,
    load_tower_registry,
    parse_cdr_table,
    partition_table_by_user,
    require_salt,
)
from .snapshots import (
    DISTRICT_CSV,
    EDGES_CSV,
    INCIDENCE_CSV,
    INTERNALS_CSV,
    SCORES_CSV,
    SETTLEMENTS_CSV,
    SUPPRESSION_CSV,
    file_digest,
    publish_snapshot,
)

log = logging.getLogger("plasmoflow.pipeline")


def _expand_cdr_paths(patterns: list[str]) -> list[Path]:
    paths: list[Path] = []
    for pattern in patterns:
        p = Path(pattern)
        if any(ch in pattern for ch in "*?["):
            paths.extend(sorted(p.parent.glob(p.name)))
        else:
            paths.append(p)
    if not paths:
        raise BadFileError("no CDR input files configured")
    missing = [str(p) for p in paths if not p.is_file()]
    if missing:
        raise BadFileError(f"missing CDR files: {missing[:5]}")
    return paths


def run_pipeline(cfg: PipelineConfig, snapshot_root: str | Path) -> int:
    """Run all stages and publish a snapshot; returns the snapshot id.

    Any stage failure raises before the pointer moves, leaving the previous
    snapshot current.
    """
    cfg.validate()
    salt = require_salt()

    towers = load_tower_registry(cfg.inputs.towers)
    region = geography.load_region(cfg.inputs.region)
    grid = geography.load_population_grid(cfg.inputs.population)
    catchments = geography.compute_catchments(towers, region)
    catchments, orphans = geography.assign_population(catchments, grid, region)
    groups = geography.estimate_urban_extents(
        catchments, cfg.geography.density_threshold, cfg.geography.link_distance_km
    )
    mapping = geography.load_district_mapping(cfg.inputs.districts)
    districts, conflicts = geography.load_districts(groups, mapping)
    settlements = geography.build_settlements(catchments, groups, districts)
    tower_map = geography.tower_to_settlement(settlements)
    sett_ids = [s.id for s in settlements]
    sett_code = {s: i for i, s in enumerate(sett_ids)}
    tower_code = {t: sett_code[sid] for t, sid in tower_map.items()}

    window = None
    if cfg.window_start is not None:
        window = (cfg.window_start, cfg.window_end)

    cdr_paths = _expand_cdr_paths(cfg.inputs.cdr)
    frames = []
    report = RejectReport()
    for path in cdr_paths:
        frame, part = parse_cdr_table(path, towers, salt, window, cfg.tz_offset_hours)
        frames.append(frame)
        report = report + part
    events = pd.concat(frames, ignore_index=True) if frames else frames
    log.info("parsed %d events (%d rejected)", report.accepted, report.rejected)

    if window is None:
        if events.empty:
            raise BadFileError("no accepted CDR rows and no configured window")
        local = mobility.local_series(events["ts"], cfg.tz_offset_hours)
        window = (local.min().date(), local.max().date())
    window_start, window_end = window
    n_days = (window_end - window_start).days + 1
    # The home window always spans the configured length, even when the
    # observation data starts later.
    home_window = (window_end - dt.timedelta(days=cfg.mobility.home_window_days - 1), window_end)

    trips: list[mobility.Trip] = []
    users_total = 0
    users_with_home = 0
    for shard in partition_table_by_user(events, cfg.shards):
        if shard.empty:
            continue
        homes = mobility.infer_homes_table(
            shard, tower_code, home_window, cfg.tz_offset_hours, cfg.mobility
        )
        users_total += shard["user"].nunique()
        users_with_home += len(homes)
        if homes.empty:
            continue
        daily = mobility.daily_locations_table(
            shard, tower_code, window_start, n_days, cfg.tz_offset_hours
        )
        users = sorted(homes["user"])
        home_codes = (
            homes.set_index("user")["home_code"].loc[users].to_numpy(dtype=np.int32)
        )
        daily = daily[daily["user"].isin(set(users))]
        matrix = mobility.day_code_matrix(daily, users, n_days)
        trips.extend(
            mobility.detect_trips_table(
                matrix, home_codes, users, sett_ids, window_start, cfg.mobility.min_trip_days
            )
        )
    trips.sort(key=lambda t: (t.user, t.first_away_day, t.destination))
    log.info("detected %d trips from %d/%d users", len(trips), users_with_home, users_total)

    case_rows = _load_incidence_rows(cfg.inputs.incidence)
    populations = {s.id: s.population for s in settlements}
    incidence = riskflow.compute_incidence(case_rows, populations, tower_map)
    tensors = riskflow.build_flow_tensors(trips, incidence.settlements, incidence.months)
    edges = riskflow.edges_frame(tensors, incidence, cfg.riskflow)
    public_edges, edge_report = riskflow.suppress_edges(edges, cfg.riskflow.k_anonymity)
    district_df, district_report = riskflow.district_matrix(
        edges, {s.id: s.district for s in settlements}, cfg.riskflow.k_anonymity
    )

    scores = _score_table(tensors, incidence, cfg)
    internals = _internals_frame(tensors)
    settlements_df = pd.DataFrame(
        {
            "settlement_id": [s.id for s in settlements],
            "district_id": [s.district for s in settlements],
            "lon": [s.lon for s in settlements],
            "lat": [s.lat for s in settlements],
            "population": [s.population for s in settlements],
            "towers": [";".join(s.towers) for s in settlements],
        }
    )
    incidence_df = _incidence_frame(incidence)
    suppression_df = _suppression_frame(edge_report, district_report)

    manifest = {
        "months": list(incidence.months),
        "k_anonymity": cfg.riskflow.k_anonymity,
        "window": {"start": str(window_start), "end": str(window_end)},
        "config": _config_dict(cfg),
        "config_digest": hashlib.sha256(
            json.dumps(_config_dict(cfg), sort_keys=True).encode()
        ).hexdigest(),
        "input_digests": {
            str(p): file_digest(p)
            for p in [*cdr_paths, cfg.inputs.towers, cfg.inputs.region,
                      cfg.inputs.population, cfg.inputs.districts, cfg.inputs.incidence]
        },
        "ingest": {
            "input_rows": report.input_rows,
            "accepted": report.accepted,
            "rejected": report.reasons,
        },
        "orphan_population": {"cells": orphans.cells, "population": orphans.population},
        "district_conflicts": [
            {"settlement": c.settlement, "districts": c.districts} for c in conflicts
        ],
        "counts": {
            "settlements": len(settlements),
            "users": users_total,
            "users_with_home": users_with_home,
            "trips": len(trips),
            "edges_public": len(public_edges),
            "edges_total": len(edges),
        },
    }
    files = {
        SETTLEMENTS_CSV: settlements_df,
        INCIDENCE_CSV: incidence_df,
        EDGES_CSV: public_edges,
        INTERNALS_CSV: internals,
        SCORES_CSV: scores,
        DISTRICT_CSV: district_df,
        SUPPRESSION_CSV: suppression_df,
    }
    sid = publish_snapshot(snapshot_root, files, manifest)
    log.info("published snapshot %d", sid)
    return sid


def _config_dict(cfg: PipelineConfig) -> dict:
    data = dataclasses.asdict(cfg)
    data["window_start"] = str(cfg.window_start) if cfg.window_start else None
    data["window_end"] = str(cfg.window_end) if cfg.window_end else None
    return data


def _load_incidence_rows(path: str) -> pd.DataFrame:
    try:
        df = pd.read_csv(path, dtype={"settlement_id": str, "tower_id": str, "month": str})
    except OSError as exc:
        raise BadFileError(f"cannot read incidence file: {exc}") from exc
    cols = list(df.columns)
    if cols not in (["settlement_id", "month", "cases"], ["tower_id", "month", "cases"]):
        raise BadFileError(
            f"incidence header must be settlement_id,month,cases or tower_id,month,cases, got {cols}"
        )
    return df


def _score_table(tensors, incidence, cfg: PipelineConfig) -> pd.DataFrame:
    rows = []
    for month in tensors.months:
        base = riskflow.import_export_scores(tensors, incidence, month, cfg.riskflow)
        effectiveness = {
            s: riskflow.target_effectiveness(tensors, incidence, s, month, cfg.riskflow)
            for s in tensors.settlements
        }
        for s in tensors.settlements:
            rows.append(
                {
                    "month": month,
                    "settlement": s,
                    "import": base.imports[s],
                    "export": base.exports[s],
                    "target_effectiveness": effectiveness[s],
                }
            )
    return pd.DataFrame(rows, columns=["month", "settlement", "import", "export", "target_effectiveness"])


def _internals_frame(tensors) -> pd.DataFrame:
    o, d, m = np.nonzero(tensors.rr_trips + tensors.v_trips)
    sett = np.asarray(tensors.settlements, dtype=object)
    months = np.asarray(tensors.months, dtype=object)
    df = pd.DataFrame(
        {
            "month": months[m],
            "origin": sett[o],
            "dest": sett[d],
            "trips_rr": tensors.rr_trips[o, d, m],
            "trips_v": tensors.v_trips[o, d, m],
            "rr_nights": tensors.rr_nights[o, d, m],
            "v_nights": tensors.v_nights[o, d, m],
        }
    )
    return df.sort_values(["month", "origin", "dest"], kind="mergesort").reset_index(drop=True)


def _incidence_frame(incidence) -> pd.DataFrame:
    rows = []
    for mi, month in enumerate(incidence.months):
        for si, s in enumerate(incidence.settlements):
            rows.append(
                {
                    "month": month,
                    "settlement": s,
                    "cases": int(incidence.cases[si, mi]),
                    "incidence": float(incidence.values[si, mi]),
                }
            )
    return pd.DataFrame(rows, columns=["month", "settlement", "cases", "incidence"])


def _suppression_frame(edge_report, district_report) -> pd.DataFrame:
    rows = []
    for level, report in (("settlement", edge_report), ("district", district_report)):
        for month in sorted(report.per_month):
            slot = report.per_month[month]
            rows.append(
                {
                    "month": month,
                    "level": level,
                    "k": report.k,
                    "emitted": slot["emitted"],
                    "suppressed": slot["suppressed"],
                }
            )
    return pd.DataFrame(rows, columns=["month", "level", "k", "emitted", "suppressed"])
