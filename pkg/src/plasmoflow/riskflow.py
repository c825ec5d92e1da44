"""Importation-risk flow networks and targeting scores.

Every directed edge (origin, dest, month) carries two flows built from the
same physical trips: residents of ``dest`` who visited ``origin`` and came
back (returning residents, risk scaled by nights spent at ``origin`` times
the incidence there) and residents of ``origin`` visiting ``dest`` (visitors,
risk carried from the incidence at their home).  Both components scale with
the incidence at the edge's origin, which is what makes zeroing a
settlement's incidence decrease the country-wide import total by exactly
that settlement's export score; the what-if machinery recomputes the full
network anyway and the test suite holds it to that identity.

All math runs on the unsuppressed network; k-anonymity suppression applies
only when edges are emitted for display.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .config import RiskflowConfig
from .errors import (
    BadFileError,
    MissingIncidenceError,
    UnknownSettlementError,
    ZeroPopulationError,
)
from .kernels import accumulate_flow_tensors
from .mobility import Trip

EDGE_COLUMNS = [
    "month",
    "origin",
    "dest",
    "trips_rr",
    "trips_v",
    "rr_risk",
    "v_risk",
    "total_risk",
]


@dataclass
class IncidenceTable:
    """Monthly incidence per settlement: cases / population, explicit zeros."""

    settlements: tuple[str, ...]          # sorted
    months: tuple[str, ...]               # sorted YYYY-MM
    cases: np.ndarray                     # int64 [n_sett, n_months]
    values: np.ndarray                    # float64 [n_sett, n_months]

    def index_of(self, settlement: str) -> int:
        try:
            return self.settlements.index(settlement)
        except ValueError:
            raise UnknownSettlementError(f"unknown settlement {settlement}") from None

    def get(self, settlement: str, month: str) -> float:
        if month not in self.months:
            raise MissingIncidenceError(f"no incidence data for month {month}")
        return float(self.values[self.index_of(settlement), self.months.index(month)])

    def zeroed(self, zero_set: Iterable[str]) -> "IncidenceTable":
        values = self.values.copy()
        cases = self.cases.copy()
        for s in zero_set:
            i = self.index_of(s)
            values[i, :] = 0.0
            cases[i, :] = 0
        return IncidenceTable(self.settlements, self.months, cases, values)

    def scaled(self, factor: float) -> "IncidenceTable":
        return IncidenceTable(self.settlements, self.months, self.cases, self.values * factor)


def compute_incidence(
    case_rows: pd.DataFrame,
    populations: dict[str, float],
    tower_to_settlement: dict[str, str] | None = None,
) -> IncidenceTable:
    """Monthly incidence from reported case counts.

    ``case_rows`` has columns (settlement_id|tower_id), month, cases; rows
    keyed by tower are summed into their settlements.  Settlements without a
    case row in a month get an explicit zero.  Cases in a settlement whose
    population is zero are an error, as is a settlement absent from the
    geography.
    """
    df = case_rows.copy()
    if "tower_id" in df.columns:
        if tower_to_settlement is None:
            raise BadFileError("incidence keyed by tower_id needs the tower map")
        unknown = set(df["tower_id"]) - set(tower_to_settlement)
        if unknown:
            raise UnknownSettlementError(f"unknown towers in incidence file: {sorted(unknown)[:5]}")
        df["settlement_id"] = df["tower_id"].map(tower_to_settlement)
    unknown = set(df["settlement_id"]) - set(populations)
    if unknown:
        raise UnknownSettlementError(f"unknown settlements in incidence file: {sorted(unknown)[:5]}")
    if (df["cases"] < 0).any():
        raise BadFileError("negative case count in incidence file")

    settlements = tuple(sorted(populations))
    months = tuple(sorted(df["month"].unique()))
    sett_idx = {s: i for i, s in enumerate(settlements)}
    month_idx = {m: i for i, m in enumerate(months)}
    cases = np.zeros((len(settlements), len(months)), dtype=np.int64)
    for sid, month, n in zip(df["settlement_id"], df["month"], df["cases"]):
        cases[sett_idx[sid], month_idx[month]] += int(n)

    pop = np.array([populations[s] for s in settlements], dtype=float)
    with_cases = cases.sum(axis=1) > 0
    if ((pop <= 0) & with_cases).any():
        bad = [s for s, p, w in zip(settlements, pop, with_cases) if p <= 0 and w]
        raise ZeroPopulationError(f"cases reported for zero-population settlements: {bad[:5]}")
    values = np.divide(cases, pop[:, None], out=np.zeros_like(cases, dtype=float), where=pop[:, None] > 0)
    return IncidenceTable(settlements, months, cases, values)


@dataclass
class FlowTensors:
    """Integer trip/night tensors indexed [origin, dest, month]."""

    settlements: tuple[str, ...]
    months: tuple[str, ...]
    rr_nights: np.ndarray
    rr_trips: np.ndarray
    v_trips: np.ndarray
    v_nights: np.ndarray


def build_flow_tensors(
    trips: Sequence[Trip], settlements: Sequence[str], months: Sequence[str]
) -> FlowTensors:
    """Accumulate trips into flow tensors over the given month axis.

    Any trip night in a month outside ``months`` means the incidence input
    does not cover the mobility data; that is an error, not a silent zero.
    """
    settlements = tuple(settlements)
    months = tuple(months)
    n, m = len(settlements), len(months)
    if not trips:
        zero = np.zeros((n, n, m), dtype=np.int64)
        return FlowTensors(settlements, months, zero, zero.copy(), zero.copy(), zero.copy())

    sett_idx = {s: i for i, s in enumerate(settlements)}
    day0 = min(t.first_away_day for t in trips)
    day1 = max(t.last_away_day for t in trips)
    n_days = (day1 - day0).days + 1
    day_month = np.empty(n_days, dtype=np.int64)
    month_idx = {mo: i for i, mo in enumerate(months)}
    for i in range(n_days):
        mo = (day0 + dt.timedelta(days=i)).strftime("%Y-%m")
        if mo not in month_idx:
            raise MissingIncidenceError(f"trip nights fall in month {mo} with no incidence data")
        day_month[i] = month_idx[mo]

    home_code = np.array([sett_idx[t.home] for t in trips], dtype=np.int64)
    dest_code = np.array([sett_idx[t.destination] for t in trips], dtype=np.int64)
    first = np.array([(t.first_away_day - day0).days for t in trips], dtype=np.int64)
    last = np.array([(t.last_away_day - day0).days for t in trips], dtype=np.int64)
    rr_nights, rr_trips, v_trips, v_nights = accumulate_flow_tensors(
        home_code, dest_code, first, last, day_month, n, m
    )
    return FlowTensors(settlements, months, rr_nights, rr_trips, v_trips, v_nights)


def _incidence_matrix(incidence: IncidenceTable, tensors: FlowTensors) -> np.ndarray:
    if incidence.settlements != tensors.settlements:
        raise UnknownSettlementError("incidence and flow tensors disagree on settlements")
    if incidence.months != tensors.months:
        missing = set(tensors.months) - set(incidence.months)
        if missing:
            raise MissingIncidenceError(f"no incidence data for months {sorted(missing)}")
        cols = [incidence.months.index(mo) for mo in tensors.months]
        return incidence.values[:, cols]
    return incidence.values


def risk_tensors(
    tensors: FlowTensors, incidence: IncidenceTable, cfg: RiskflowConfig
) -> tuple[np.ndarray, np.ndarray]:
    """(rr_risk, v_risk) float tensors [origin, dest, month], unsuppressed."""
    inc = _incidence_matrix(incidence, tensors)
    rr = cfg.rr_weight * tensors.rr_nights * inc[:, None, :]
    v_base = tensors.v_trips if cfg.visitor_weight_mode == "per_trip" else tensors.v_nights
    v = cfg.v_weight * v_base * inc[:, None, :]
    return rr, v


def edges_frame(
    tensors: FlowTensors, incidence: IncidenceTable, cfg: RiskflowConfig
) -> pd.DataFrame:
    """Unsuppressed edge list, sorted by (month, origin, dest)."""
    rr, v = risk_tensors(tensors, incidence, cfg)
    trips_any = tensors.rr_trips + tensors.v_trips
    o, d, m = np.nonzero(trips_any)
    sett = np.asarray(tensors.settlements, dtype=object)
    months = np.asarray(tensors.months, dtype=object)
    df = pd.DataFrame(
        {
            "month": months[m],
            "origin": sett[o],
            "dest": sett[d],
            "trips_rr": tensors.rr_trips[o, d, m],
            "trips_v": tensors.v_trips[o, d, m],
            "rr_risk": rr[o, d, m],
            "v_risk": v[o, d, m],
        }
    )
    df["total_risk"] = df["rr_risk"] + df["v_risk"]
    return df.sort_values(["month", "origin", "dest"], kind="mergesort").reset_index(drop=True)


@dataclass
class RiskEdge:
    origin: str
    dest: str
    month: str
    trip_count_rr: int
    trip_count_v: int
    rr_risk: float
    v_risk: float
    total_risk: float


@dataclass
class SuppressionReport:
    k: int
    per_month: dict = field(default_factory=dict)  # month -> {"emitted": n, "suppressed": n}

    def add(self, month: str, emitted: int, suppressed: int):
        slot = self.per_month.setdefault(month, {"emitted": 0, "suppressed": 0})
        slot["emitted"] += emitted
        slot["suppressed"] += suppressed

    @property
    def total_suppressed(self) -> int:
        return sum(v["suppressed"] for v in self.per_month.values())


def suppress_edges(edges: pd.DataFrame, k: int) -> tuple[pd.DataFrame, SuppressionReport]:
    """Drop edges carrying fewer than k combined trips, tallying what went."""
    report = SuppressionReport(k=k)
    keep = (edges["trips_rr"] + edges["trips_v"]) >= k
    for month, sub in edges.groupby("month"):
        kept = int(keep[sub.index].sum())
        report.add(month, kept, len(sub) - kept)
    return edges[keep].reset_index(drop=True), report


def build_risk_network(
    trips: Sequence[Trip],
    incidence: IncidenceTable,
    k: int,
    cfg: RiskflowConfig | None = None,
) -> tuple[list[RiskEdge], SuppressionReport]:
    """Assemble the suppressed risk-flow network from trips and incidence."""
    if k < 1:
        raise ValueError("k must be >= 1")
    cfg = cfg or RiskflowConfig()
    tensors = build_flow_tensors(trips, incidence.settlements, incidence.months)
    edges = edges_frame(tensors, incidence, cfg)
    public, report = suppress_edges(edges, k)
    out = [
        RiskEdge(
            origin=r.origin,
            dest=r.dest,
            month=r.month,
            trip_count_rr=int(r.trips_rr),
            trip_count_v=int(r.trips_v),
            rr_risk=float(r.rr_risk),
            v_risk=float(r.v_risk),
            total_risk=float(r.total_risk),
        )
        for r in public.itertuples()
    ]
    return out, report


@dataclass
class ScoreTable:
    month: str
    imports: dict[str, float]
    exports: dict[str, float]
    target_effectiveness: dict[str, float] = field(default_factory=dict)


def import_export_scores(
    tensors: FlowTensors, incidence: IncidenceTable, month: str, cfg: RiskflowConfig
) -> ScoreTable:
    """Row/column sums of the unsuppressed network for one month.

    Sums accumulate in sorted settlement order, so results do not depend on
    shard count or edge ordering.
    """
    if month not in tensors.months:
        raise MissingIncidenceError(f"month {month} not covered")
    mi = tensors.months.index(month)
    rr, v = risk_tensors(tensors, incidence, cfg)
    total = rr[:, :, mi] + v[:, :, mi]
    exports = total.sum(axis=1)
    imports = total.sum(axis=0)
    sett = tensors.settlements
    return ScoreTable(
        month=month,
        imports={s: float(imports[i]) for i, s in enumerate(sett)},
        exports={s: float(exports[i]) for i, s in enumerate(sett)},
    )


def score_settlements(network: Sequence[RiskEdge] | pd.DataFrame, month: str) -> ScoreTable:
    """Import/export scores directly from an edge list (single month)."""
    if isinstance(network, pd.DataFrame):
        rows = network[network["month"] == month]
        pairs = zip(rows["origin"], rows["dest"], rows["total_risk"])
    else:
        pairs = ((e.origin, e.dest, e.total_risk) for e in network if e.month == month)
    imports: dict[str, float] = {}
    exports: dict[str, float] = {}
    for origin, dest, risk in sorted(pairs):
        exports[origin] = exports.get(origin, 0.0) + risk
        imports[dest] = imports.get(dest, 0.0) + risk
    return ScoreTable(month=month, imports=imports, exports=exports)


def target_effectiveness(
    tensors: FlowTensors,
    incidence: IncidenceTable,
    settlement: str,
    month: str,
    cfg: RiskflowConfig | None = None,
) -> float:
    """Country-wide import decrease if the settlement's incidence were zero.

    Computed by literally re-evaluating the unsuppressed network with the
    settlement's incidence zeroed; equals the settlement's export score by
    linearity, which the tests assert but the implementation does not assume.
    """
    cfg = cfg or RiskflowConfig()
    incidence.index_of(settlement)  # raises for unknown settlements
    base = import_export_scores(tensors, incidence, month, cfg)
    zeroed = import_export_scores(tensors, incidence.zeroed([settlement]), month, cfg)
    return sum(base.imports[s] - zeroed.imports[s] for s in sorted(base.imports))


@dataclass
class WhatifResult:
    month: str
    zero_set: tuple[str, ...]
    scores: ScoreTable
    decreases: dict[str, float]
    total_decrease: float


def whatif(
    tensors: FlowTensors,
    incidence: IncidenceTable,
    zero_set: Iterable[str],
    month: str,
    cfg: RiskflowConfig | None = None,
) -> WhatifResult:
    """Full recomputation with incidence zeroed on a set of settlements."""
    cfg = cfg or RiskflowConfig()
    zero_set = tuple(sorted(set(zero_set)))
    for s in zero_set:
        incidence.index_of(s)
    base = import_export_scores(tensors, incidence, month, cfg)
    scen = import_export_scores(tensors, incidence.zeroed(zero_set), month, cfg)
    decreases = {s: base.imports[s] - scen.imports[s] for s in sorted(base.imports)}
    return WhatifResult(
        month=month,
        zero_set=zero_set,
        scores=scen,
        decreases=decreases,
        total_decrease=sum(decreases.values()),
    )


def importing_areas(
    tensors: FlowTensors,
    incidence: IncidenceTable,
    settlement: str,
    month: str,
    cfg: RiskflowConfig | None = None,
) -> list[tuple[str, float]]:
    """Areas importing risk from a settlement: per-destination decreases.

    The decrease for area A is the unsuppressed total risk on the edge
    settlement -> A; entries sort by decrease descending, then by id.
    """
    cfg = cfg or RiskflowConfig()
    x = incidence.index_of(settlement)
    if month not in tensors.months:
        raise MissingIncidenceError(f"month {month} not covered")
    mi = tensors.months.index(month)
    rr, v = risk_tensors(tensors, incidence, cfg)
    total = rr[x, :, mi] + v[x, :, mi]
    has_edge = (tensors.rr_trips[x, :, mi] + tensors.v_trips[x, :, mi]) >= 1
    items = [
        (tensors.settlements[a], float(total[a])) for a in np.nonzero(has_edge)[0]
    ]
    return sorted(items, key=lambda it: (-it[1], it[0]))


def district_matrix(
    edges: pd.DataFrame, settlement_district: dict[str, str], k: int
) -> tuple[pd.DataFrame, SuppressionReport]:
    """Edge list rolled up to district pairs, k-anonymity re-applied.

    Aggregates the unsuppressed settlement network (so settlement-level
    suppression does not starve district cells), then withholds district
    cells with fewer than k combined trips.
    """
    report = SuppressionReport(k=k)
    if edges.empty:
        return (
            pd.DataFrame(columns=["month", "origin_district", "dest_district",
                                  "trips_rr", "trips_v", "rr_risk", "v_risk", "total_risk"]),
            report,
        )
    df = edges.assign(
        origin_district=edges["origin"].map(settlement_district),
        dest_district=edges["dest"].map(settlement_district),
    )
    if df["origin_district"].isna().any() or df["dest_district"].isna().any():
        missing = sorted(
            set(df.loc[df["origin_district"].isna(), "origin"])
            | set(df.loc[df["dest_district"].isna(), "dest"])
        )
        raise UnknownSettlementError(f"settlements without districts: {missing[:5]}")
    grouped = (
        df.groupby(["month", "origin_district", "dest_district"], as_index=False)[
            ["trips_rr", "trips_v", "rr_risk", "v_risk", "total_risk"]
        ]
        .sum()
        .sort_values(["month", "origin_district", "dest_district"], kind="mergesort")
        .reset_index(drop=True)
    )
    keep = (grouped["trips_rr"] + grouped["trips_v"]) >= k
    for month, sub in grouped.groupby("month"):
        kept = int(keep[sub.index].sum())
        report.add(month, kept, len(sub) - kept)
    return grouped[keep].reset_index(drop=True), report
