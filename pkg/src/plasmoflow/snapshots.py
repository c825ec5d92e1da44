"""Versioned snapshot store.

A snapshot is a plain directory of CSVs plus a JSON manifest; ``current`` is
a one-line pointer file swapped with an atomic rename, so readers observe
either the previous snapshot or the new one, never a mix.  Ids are
monotonically increasing integers.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import NoSnapshotError
from .riskflow import FlowTensors, IncidenceTable

EDGES_CSV = "edges.csv"
SCORES_CSV = "scores.csv"
SETTLEMENTS_CSV = "settlements.csv"
INCIDENCE_CSV = "incidence.csv"
INTERNALS_CSV = "flow_internals.csv"
DISTRICT_CSV = "district_matrix.csv"
SUPPRESSION_CSV = "suppression.csv"
MANIFEST = "manifest.json"
POINTER = "current"


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def next_snapshot_id(root: Path) -> int:
    existing = [int(p.name) for p in root.iterdir() if p.is_dir() and p.name.isdigit()]
    return max(existing, default=0) + 1


def publish_snapshot(root: str | Path, files: dict[str, pd.DataFrame], manifest: dict) -> int:
    """Write a new snapshot directory and atomically repoint ``current``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    sid = next_snapshot_id(root)
    directory = root / f"{sid:06d}"
    directory.mkdir()
    for name, frame in files.items():
        frame.to_csv(directory / name, index=False)
    manifest = dict(manifest)
    manifest["id"] = sid
    manifest["created_at"] = dt.datetime.now(dt.timezone.utc).isoformat()
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    tmp = root / f".{POINTER}.tmp"
    tmp.write_text(f"{sid:06d}\n")
    os.replace(tmp, root / POINTER)
    return sid


def current_snapshot_id(root: str | Path) -> int | None:
    pointer = Path(root) / POINTER
    try:
        return int(pointer.read_text().strip())
    except (OSError, ValueError):
        return None


@dataclass
class SnapshotData:
    id: int
    manifest: dict
    settlements: pd.DataFrame
    incidence: pd.DataFrame
    edges: pd.DataFrame
    scores: pd.DataFrame
    internals: pd.DataFrame
    district_matrix: pd.DataFrame
    suppression: pd.DataFrame

    @property
    def months(self) -> list[str]:
        return list(self.manifest["months"])

    def incidence_table(self) -> IncidenceTable:
        sett = tuple(sorted(self.settlements["settlement_id"]))
        months = tuple(sorted(self.incidence["month"].unique()))
        cases = np.zeros((len(sett), len(months)), dtype=np.int64)
        values = np.zeros((len(sett), len(months)), dtype=float)
        si = {s: i for i, s in enumerate(sett)}
        mi = {m: i for i, m in enumerate(months)}
        for r in self.incidence.itertuples():
            cases[si[r.settlement], mi[r.month]] = r.cases
            values[si[r.settlement], mi[r.month]] = r.incidence
        return IncidenceTable(sett, months, cases, values)

    def flow_tensors(self) -> FlowTensors:
        sett = tuple(sorted(self.settlements["settlement_id"]))
        months = tuple(sorted(self.incidence["month"].unique()))
        n, m = len(sett), len(months)
        shape = (n, n, m)
        rr_nights = np.zeros(shape, dtype=np.int64)
        rr_trips = np.zeros(shape, dtype=np.int64)
        v_trips = np.zeros(shape, dtype=np.int64)
        v_nights = np.zeros(shape, dtype=np.int64)
        si = {s: i for i, s in enumerate(sett)}
        mi = {mo: i for i, mo in enumerate(months)}
        for r in self.internals.itertuples():
            o, d, k = si[r.origin], si[r.dest], mi[r.month]
            rr_nights[o, d, k] = r.rr_nights
            rr_trips[o, d, k] = r.trips_rr
            v_trips[o, d, k] = r.trips_v
            v_nights[o, d, k] = r.v_nights
        return FlowTensors(sett, months, rr_nights, rr_trips, v_trips, v_nights)


def load_snapshot(root: str | Path, sid: int | None = None) -> SnapshotData:
    root = Path(root)
    if sid is None:
        sid = current_snapshot_id(root)
    if sid is None:
        raise NoSnapshotError(f"no published snapshot under {root}")
    directory = root / f"{sid:06d}"
    if not directory.is_dir():
        raise NoSnapshotError(f"snapshot {sid} missing under {root}")
    manifest = json.loads((directory / MANIFEST).read_text())
    # round_trip parsing keeps re-serialized floats byte-identical to the CSVs
    read = lambda name, **kw: pd.read_csv(directory / name, float_precision="round_trip", **kw)
    return SnapshotData(
        id=sid,
        manifest=manifest,
        settlements=read(SETTLEMENTS_CSV, dtype={"settlement_id": str, "district_id": str}),
        incidence=read(INCIDENCE_CSV, dtype={"settlement": str}),
        edges=read(EDGES_CSV, dtype={"origin": str, "dest": str}),
        scores=read(SCORES_CSV, dtype={"settlement": str}),
        internals=read(INTERNALS_CSV, dtype={"origin": str, "dest": str}),
        district_matrix=read(DISTRICT_CSV, dtype={"origin_district": str, "dest_district": str}),
        suppression=read(SUPPRESSION_CSV),
    )
