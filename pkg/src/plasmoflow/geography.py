"""Settlement geography.

Towers get Voronoi catchments (planar lon/lat approximation, clipped to a
configured bounding region); population grid cells are attributed to the
catchment containing them; catchments dense enough to count as urban are
merged into settlements when within linking distance of each other; every
remaining tower is its own settlement.  Settlement ids are the
lexicographically smallest member tower id, which keeps the partition stable
across runs and input orderings.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import shapely
from scipy.spatial import Voronoi, cKDTree
from shapely.geometry import Point, Polygon

from .errors import (
    BadFileError,
    CoincidentTowersError,
    DegenerateCatchmentError,
    TowerOutsideRegionError,
    UnmappedTowerError,
)

EARTH_RADIUS_KM = 6371.0088


@dataclass
class Catchment:
    tower: str
    lon: float
    lat: float
    polygon: Polygon
    population: float = 0.0

    @property
    def area_km2(self) -> float:
        return polygon_area_km2(self.polygon)

    @property
    def density(self) -> float:
        area = self.area_km2
        if area <= 0:
            raise DegenerateCatchmentError(f"catchment of tower {self.tower} has zero area")
        return self.population / area


@dataclass
class Settlement:
    id: str
    towers: tuple[str, ...]
    lon: float
    lat: float
    population: float
    district: str = ""


@dataclass
class OrphanReport:
    cells: int = 0
    population: float = 0.0


@dataclass
class DistrictConflict:
    settlement: str
    districts: dict = field(default_factory=dict)  # district -> tower count


def load_region(path: str | Path) -> Polygon:
    """Region polygon from a ``lon,lat`` ring CSV (closed implicitly)."""
    df = pd.read_csv(path)
    if list(df.columns) != ["lon", "lat"]:
        raise BadFileError(f"region header must be lon,lat, got {list(df.columns)}")
    if len(df) < 3:
        raise BadFileError("region ring needs at least 3 vertices")
    poly = Polygon(zip(df["lon"], df["lat"]))
    if not poly.is_valid or poly.area == 0:
        raise BadFileError("region ring is not a valid polygon")
    return poly


def load_population_grid(path: str | Path) -> pd.DataFrame:
    df = pd.read_csv(path)
    if list(df.columns) != ["lon", "lat", "population"]:
        raise BadFileError(f"population header must be lon,lat,population, got {list(df.columns)}")
    if (df["population"] < 0).any():
        raise BadFileError("negative population cell")
    return df


def load_district_mapping(path: str | Path) -> dict[str, str]:
    df = pd.read_csv(path, dtype=str)
    if list(df.columns) != ["tower_id", "district_id"]:
        raise BadFileError(f"district header must be tower_id,district_id, got {list(df.columns)}")
    return dict(zip(df["tower_id"], df["district_id"]))


def polygon_area_km2(polygon: Polygon) -> float:
    """Planar area under a local equirectangular projection about the centroid."""
    lon0, lat0 = polygon.centroid.x, polygon.centroid.y
    kx = np.cos(np.deg2rad(lat0)) * np.pi / 180.0 * EARTH_RADIUS_KM
    ky = np.pi / 180.0 * EARTH_RADIUS_KM
    lon, lat = polygon.exterior.coords.xy
    x = (np.asarray(lon) - lon0) * kx
    y = (np.asarray(lat) - lat0) * ky
    return float(Polygon(zip(x, y)).area)


def haversine_km(lat1, lon1, lat2, lon2):
    """Great-circle distance; accepts scalars or arrays (degrees)."""
    lat1, lon1, lat2, lon2 = map(np.deg2rad, (lat1, lon1, lat2, lon2))
    a = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(a))


def compute_catchments(towers: pd.DataFrame, region: Polygon) -> list[Catchment]:
    """Voronoi tessellation of the region by tower coordinates.

    Planar approximation over lon/lat: each catchment is the set of points
    nearer (in lon/lat Euclidean distance) to its tower than to any other.
    Cells are clipped to ``region``.  Duplicate tower coordinates are an
    error; jitter or merge them upstream.
    """
    if len(towers) == 0:
        raise BadFileError("tower registry is empty")
    towers = towers.sort_values("tower_id").reset_index(drop=True)
    pts = towers[["lon", "lat"]].to_numpy(dtype=float)

    dup = pd.DataFrame(pts).duplicated(keep=False)
    if dup.any():
        offenders = towers.loc[dup.to_numpy(), "tower_id"].tolist()
        raise CoincidentTowersError(f"coincident tower coordinates: {offenders[:6]}")

    for _, row in towers.iterrows():
        if not region.covers(Point(row["lon"], row["lat"])):
            raise TowerOutsideRegionError(f"tower {row['tower_id']} lies outside the region")

    if len(towers) == 1:
        row = towers.iloc[0]
        return [Catchment(row["tower_id"], row["lon"], row["lat"], Polygon(region.exterior))]

    cells = _bounded_voronoi_cells(pts, region)
    out = []
    for i, row in towers.iterrows():
        poly = cells[i].intersection(region)
        if poly.is_empty or poly.area == 0:
            raise DegenerateCatchmentError(f"catchment of tower {row['tower_id']} degenerated to zero area")
        if poly.geom_type == "MultiPolygon":  # keep the piece containing the tower
            pt = Point(row["lon"], row["lat"])
            poly = max(poly.geoms, key=lambda g: (g.covers(pt), g.area))
        out.append(Catchment(row["tower_id"], row["lon"], row["lat"], poly))
    return out


def _bounded_voronoi_cells(pts: np.ndarray, region: Polygon) -> list[Polygon]:
    # Mirroring every site across the four sides of the bounding box makes
    # each original cell finite and, inside the box, identical to the true
    # Voronoi cell (a site's own mirror bisector is the box side itself).
    minx, miny, maxx, maxy = region.bounds
    pad = max(maxx - minx, maxy - miny) * 0.05 + 1e-9
    minx, miny, maxx, maxy = minx - pad, miny - pad, maxx + pad, maxy + pad
    mirrors = [
        np.column_stack([2 * minx - pts[:, 0], pts[:, 1]]),
        np.column_stack([2 * maxx - pts[:, 0], pts[:, 1]]),
        np.column_stack([pts[:, 0], 2 * miny - pts[:, 1]]),
        np.column_stack([pts[:, 0], 2 * maxy - pts[:, 1]]),
    ]
    vor = Voronoi(np.vstack([pts] + mirrors))
    cells = []
    for i in range(len(pts)):
        verts = vor.regions[vor.point_region[i]]
        cells.append(Polygon(vor.vertices[verts]))
    return cells


def assign_population(
    catchments: list[Catchment], grid: pd.DataFrame, region: Polygon
) -> tuple[list[Catchment], OrphanReport]:
    """Attribute each grid cell's population to the catchment containing it.

    For a Voronoi tessellation "containing catchment" equals "nearest tower"
    (planar lon/lat, matching the tessellation metric); boundary ties go to
    the smallest tower id.  Cells outside the region are excluded and
    tallied in the orphan report.  Total population is conserved:
    catchment sums + orphans = grid total.
    """
    for c in catchments:
        c.population = 0.0
    report = OrphanReport()
    if grid.empty:
        return catchments, report

    lon = grid["lon"].to_numpy(dtype=float)
    lat = grid["lat"].to_numpy(dtype=float)
    pop = grid["population"].to_numpy(dtype=float)
    inside = shapely.intersects_xy(region, lon, lat)  # boundary counts as inside
    report.cells = int((~inside).sum())
    report.population = float(pop[~inside].sum())
    if not inside.any():
        return catchments, report

    towers_sorted = sorted(range(len(catchments)), key=lambda i: catchments[i].tower)
    pts = np.array([[catchments[i].lon, catchments[i].lat] for i in towers_sorted])
    tree = cKDTree(pts)
    k = min(len(pts), 4)
    dists, idxs = tree.query(np.column_stack([lon[inside], lat[inside]]), k=k)
    if k == 1:
        dists = dists[:, None]
        idxs = idxs[:, None]
    # Break exact-distance ties toward the smallest tower id: pts are in
    # tower-id order, so the smallest qualifying column index wins.
    tie = dists <= dists[:, [0]] * (1 + 1e-12) + 1e-15
    choice = np.where(tie, idxs, np.iinfo(np.int64).max).min(axis=1)
    sums = np.zeros(len(pts))
    np.add.at(sums, choice, pop[inside])
    for col, total in enumerate(sums):
        catchments[towers_sorted[col]].population = float(total)
    return catchments, report


def estimate_urban_extents(
    catchments: list[Catchment], density_threshold: float, link_distance_km: float
) -> list[list[str]]:
    """Partition towers into settlement groups.

    A tower is urban when its catchment density is at or above the
    threshold; urban towers within the linking distance of each other merge
    transitively; every other tower stays a singleton.  Groups come back
    sorted (members sorted, groups by smallest member) so the partition is
    independent of input order.
    """
    if density_threshold <= 0 or link_distance_km <= 0:
        raise ValueError("density_threshold and link_distance_km must be > 0")
    catchments = sorted(catchments, key=lambda c: c.tower)
    urban = [c.density >= density_threshold for c in catchments]

    parent = list(range(len(catchments)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i, j):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    urban_idx = [i for i, u in enumerate(urban) if u]
    for a in range(len(urban_idx)):
        i = urban_idx[a]
        for b in range(a + 1, len(urban_idx)):
            j = urban_idx[b]
            d = haversine_km(catchments[i].lat, catchments[i].lon, catchments[j].lat, catchments[j].lon)
            if d <= link_distance_km:
                union(i, j)

    groups: dict[int, list[str]] = {}
    for i, c in enumerate(catchments):
        groups.setdefault(find(i), []).append(c.tower)
    return sorted((sorted(g) for g in groups.values()), key=lambda g: g[0])


def load_districts(
    groups: list[list[str]], mapping: dict[str, str]
) -> tuple[dict[str, str], list[DistrictConflict]]:
    """Assign one district per settlement group.

    Majority tower count wins; ties go to the smallest district id.  Groups
    whose towers disagree are listed in the conflict report.
    """
    assignments: dict[str, str] = {}
    conflicts: list[DistrictConflict] = []
    for group in groups:
        counts: dict[str, int] = {}
        for tower in group:
            if tower not in mapping:
                raise UnmappedTowerError(f"tower {tower} missing from district mapping")
            counts[mapping[tower]] = counts.get(mapping[tower], 0) + 1
        winner = min(counts, key=lambda d: (-counts[d], d))
        sid = min(group)
        assignments[sid] = winner
        if len(counts) > 1:
            conflicts.append(DistrictConflict(settlement=sid, districts=counts))
    return assignments, conflicts


def build_settlements(
    catchments: list[Catchment],
    groups: list[list[str]],
    districts: dict[str, str],
) -> list[Settlement]:
    """Materialize settlements from a tower partition.

    Population is the sum of member catchments; the centroid is the plain
    mean of member tower coordinates.
    """
    by_tower = {c.tower: c for c in catchments}
    out = []
    for group in groups:
        members = [by_tower[t] for t in group]
        sid = min(group)
        out.append(
            Settlement(
                id=sid,
                towers=tuple(sorted(group)),
                lon=float(np.mean([m.lon for m in members])),
                lat=float(np.mean([m.lat for m in members])),
                population=float(sum(m.population for m in members)),
                district=districts.get(sid, ""),
            )
        )
    return sorted(out, key=lambda s: s.id)


def tower_to_settlement(settlements: list[Settlement]) -> dict[str, str]:
    return {t: s.id for s in settlements for t in s.towers}
