"""Read-only HTTP JSON API over the snapshot store.

Every request resolves the ``current`` pointer once and answers entirely
from that snapshot, so a swap mid-request never mixes data.  Flow endpoints
serve the k-anonymity-suppressed edge list; targeting and what-if values
are risk aggregates recomputed from the unsuppressed internals, which never
expose trip counts.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel

from . import riskflow
from .config import RiskflowConfig
from .errors import NoSnapshotError, UnknownSettlementError
from .snapshots import SnapshotData, current_snapshot_id, load_snapshot

API_PREFIX = "/api/v1"


class WhatifRequest(BaseModel):
    month: str
    zero_set: list[str]


def create_app(snapshot_root: str | Path) -> FastAPI:
    root = Path(snapshot_root)
    app = FastAPI(title="plasmoflow", version="0.1.0")
    cache: dict[int, SnapshotData] = {}

    def snapshot() -> SnapshotData:
        sid = current_snapshot_id(root)
        if sid is None:
            raise HTTPException(status_code=503, detail="no snapshot published")
        if sid not in cache:
            try:
                cache[sid] = load_snapshot(root, sid)
            except NoSnapshotError as exc:
                raise HTTPException(status_code=503, detail=str(exc)) from exc
            # keep only a couple of generations around
            for old in sorted(cache)[:-2]:
                del cache[old]
        return cache[sid]

    def require_month(snap: SnapshotData, month: str) -> str:
        if month not in snap.months:
            raise HTTPException(status_code=404, detail=f"month {month} not in snapshot")
        return month

    def riskflow_cfg(snap: SnapshotData) -> RiskflowConfig:
        return RiskflowConfig(**snap.manifest["config"]["riskflow"])

    @app.get(API_PREFIX + "/health")
    def health():
        sid = current_snapshot_id(root)
        return {"status": "ok" if sid is not None else "no_snapshot", "snapshot_id": sid}

    @app.get(API_PREFIX + "/settlements")
    def settlements():
        snap = snapshot()
        return {
            "snapshot_id": snap.id,
            "months": snap.months,
            "settlements": snap.settlements.to_dict(orient="records"),
        }

    @app.get(API_PREFIX + "/incidence")
    def incidence(month: str = Query(...)):
        snap = snapshot()
        require_month(snap, month)
        rows = snap.incidence[snap.incidence["month"] == month]
        return {"snapshot_id": snap.id, "month": month, "incidence": rows.to_dict(orient="records")}

    @app.get(API_PREFIX + "/flows")
    def flows(month: str = Query(...), min_total_risk: float = Query(0.0, ge=0.0)):
        snap = snapshot()
        require_month(snap, month)
        rows = snap.edges[
            (snap.edges["month"] == month) & (snap.edges["total_risk"] >= min_total_risk)
        ]
        return {"snapshot_id": snap.id, "month": month, "flows": rows.to_dict(orient="records")}

    @app.get(API_PREFIX + "/scores")
    def scores(month: str = Query(...)):
        snap = snapshot()
        require_month(snap, month)
        rows = snap.scores[snap.scores["month"] == month]
        return {"snapshot_id": snap.id, "month": month, "scores": rows.to_dict(orient="records")}

    @app.get(API_PREFIX + "/targeting")
    def targeting(month: str = Query(...), top: int = Query(10, ge=1)):
        snap = snapshot()
        require_month(snap, month)
        rows = snap.scores[snap.scores["month"] == month].sort_values(
            ["target_effectiveness", "settlement"], ascending=[False, True], kind="mergesort"
        )
        return {
            "snapshot_id": snap.id,
            "month": month,
            "targets": rows.head(top).to_dict(orient="records"),
        }

    @app.get(API_PREFIX + "/targeting/{settlement}")
    def importing_areas(settlement: str, month: str = Query(...)):
        snap = snapshot()
        require_month(snap, month)
        if settlement not in set(snap.settlements["settlement_id"]):
            raise HTTPException(status_code=404, detail=f"unknown settlement {settlement}")
        tensors = snap.flow_tensors()
        incidence_table = snap.incidence_table()
        cfg = riskflow_cfg(snap)
        areas = riskflow.importing_areas(tensors, incidence_table, settlement, month, cfg)
        effectiveness = riskflow.target_effectiveness(
            tensors, incidence_table, settlement, month, cfg
        )
        return {
            "snapshot_id": snap.id,
            "month": month,
            "settlement": settlement,
            "target_effectiveness": effectiveness,
            "areas": [{"settlement": s, "decrease": d} for s, d in areas],
        }

    @app.get(API_PREFIX + "/districts/matrix")
    def district_matrix(month: str = Query(...)):
        snap = snapshot()
        require_month(snap, month)
        rows = snap.district_matrix[snap.district_matrix["month"] == month]
        return {"snapshot_id": snap.id, "month": month, "matrix": rows.to_dict(orient="records")}

    @app.post(API_PREFIX + "/whatif")
    def whatif(body: WhatifRequest):
        snap = snapshot()
        require_month(snap, body.month)
        if not isinstance(body.zero_set, list):
            raise HTTPException(status_code=400, detail="zero_set must be a list")
        tensors = snap.flow_tensors()
        incidence_table = snap.incidence_table()
        try:
            result = riskflow.whatif(
                tensors, incidence_table, body.zero_set, body.month, riskflow_cfg(snap)
            )
        except UnknownSettlementError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return {
            "snapshot_id": snap.id,
            "month": result.month,
            "zero_set": list(result.zero_set),
            "total_decrease": result.total_decrease,
            "decreases": result.decreases,
            "scores": [
                {
                    "settlement": s,
                    "import": result.scores.imports[s],
                    "export": result.scores.exports[s],
                }
                for s in sorted(result.scores.imports)
            ],
        }

    return app
