"""Spatial grid, validated OD snapshots, and centroid distances.

The grid owns the index: the order of cells in the grid file defines matrix
row/column indices everywhere downstream, and all matrices in the package are
indexed by that order. Distances are centroid-to-centroid, in kilometers:
Euclidean for planar grids (coordinates in meters), great-circle (haversine)
for WGS84 grids.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import pandas as pd

from .errors import (
    DegenerateCentroids,
    DimensionMismatch,
    DuplicateCellId,
    EmptySelection,
    MalformedRow,
    MixedGrids,
    NegativeCount,
    TooFewCells,
    UnknownCellId,
)

EARTH_RADIUS_KM = 6371.0088


class CoordinateSystem(enum.Enum):
    planar_meters = "planar_meters"
    wgs84_degrees = "wgs84_degrees"


# Grid file headers, normalized to lowercase. The header names declare the
# coordinate system: x,y means planar meters; lon,lat means WGS84 degrees.
_PLANAR_HEADER = ("cell_id", "x", "y")
_WGS84_HEADER = ("cell_id", "lon", "lat")
_OD_HEADER = ("origin_id", "dest_id", "hour", "scenario", "count")


class SliceLabel(NamedTuple):
    """Identifies one OD time slice."""

    scenario: str
    hour: int


class SpatialGrid:
    """Ordered set of region cells with centroids.

    Parameters
    ----------
    cell_ids : sequence of str
        Unique, opaque identifiers. Their order is fixed for the lifetime
        of the grid and defines matrix indices.
    centroids : (n, 2) array
        Cell centroids. Columns are (x, y) in meters for planar grids and
        (lon, lat) in degrees for WGS84 grids.
    coordinate_system : CoordinateSystem
    """

    def __init__(self, cell_ids: Sequence[str], centroids, coordinate_system: CoordinateSystem):
        ids = tuple(str(c) for c in cell_ids)
        if len(ids) < 2:
            raise TooFewCells(f"grid needs at least 2 cells, got {len(ids)}")
        if len(set(ids)) != len(ids):
            seen, dup = set(), None
            for c in ids:
                if c in seen:
                    dup = c
                    break
                seen.add(c)
            raise DuplicateCellId(f"duplicate cell id {dup!r}")
        xy = np.asarray(centroids, dtype=float)
        if xy.shape != (len(ids), 2):
            raise DimensionMismatch(f"centroids shape {xy.shape} != ({len(ids)}, 2)")
        if not np.all(np.isfinite(xy)):
            raise MalformedRow("non-finite centroid coordinate")
        self.cell_ids = ids
        self.centroids = xy
        self.centroids.setflags(write=False)
        self.coordinate_system = coordinate_system
        self._index = {c: i for i, c in enumerate(ids)}

    @property
    def n(self) -> int:
        return len(self.cell_ids)

    def index(self, cell_id: str) -> int:
        try:
            return self._index[cell_id]
        except KeyError:
            raise UnknownCellId(f"unknown cell id {cell_id!r}") from None

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SpatialGrid)
            and self.cell_ids == other.cell_ids
            and self.coordinate_system == other.coordinate_system
            and np.array_equal(self.centroids, other.centroids)
        )

    def __hash__(self):
        return hash((self.cell_ids, self.coordinate_system))

    def __repr__(self):
        return f"SpatialGrid(n={self.n}, {self.coordinate_system.value})"


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Symmetric matrix of centroid distances in kilometers, zero diagonal."""

    d: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise DimensionMismatch(f"distance matrix must be square, got {d.shape}")
        if not np.array_equal(d, d.T):
            raise DimensionMismatch("distance matrix must be symmetric")
        if np.any(np.diag(d) != 0.0):
            raise DimensionMismatch("distance matrix diagonal must be zero")
        off = d[~np.eye(d.shape[0], dtype=bool)]
        if np.any(off <= 0.0):
            raise DegenerateCentroids("zero or negative off-diagonal distance")
        object.__setattr__(self, "d", d)
        d.setflags(write=False)

    @property
    def n(self) -> int:
        return self.d.shape[0]


class ODSnapshot:
    """Nonnegative N x N trip-count matrix for one (scenario, hour) slice."""

    def __init__(self, grid: SpatialGrid, label: SliceLabel, M):
        label = SliceLabel(str(label[0]), int(label[1]))
        if not 0 <= label.hour <= 23:
            raise MalformedRow(f"hour must be in 0..23, got {label.hour}")
        M = np.asarray(M, dtype=float)
        if M.shape != (grid.n, grid.n):
            raise DimensionMismatch(f"OD matrix shape {M.shape} != ({grid.n}, {grid.n})")
        if np.any(M < 0):
            raise NegativeCount("OD matrix has negative entries")
        self.grid = grid
        self.label = label
        self.M = M
        self.M.setflags(write=False)

    @property
    def total_trips(self) -> float:
        return float(self.M.sum())

    def __repr__(self):
        return f"ODSnapshot({self.label.scenario!r}, hour={self.label.hour}, n={self.grid.n})"


class ProfileBin(NamedTuple):
    """One distance bin of the non-zero-pair profile."""

    lo_km: float
    hi_km: float
    n_pairs: int
    n_nonzero: int
    pct: float


def _read_table(path, expected_header: tuple[str, ...] | None = None) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True)
    except pd.errors.ParserError as exc:
        raise MalformedRow(f"{path}: {exc}") from exc
    except pd.errors.EmptyDataError as exc:
        raise MalformedRow(f"{path}: empty file, header row required") from exc
    frame.columns = [str(c).strip().lower() for c in frame.columns]
    if expected_header is not None and tuple(frame.columns) != expected_header:
        raise MalformedRow(
            f"{path}: expected header {','.join(expected_header)}, got {','.join(frame.columns)}"
        )
    return frame


def _numeric(frame: pd.DataFrame, column: str, path) -> np.ndarray:
    col = frame[column]
    if col.isna().any():
        row = int(col.isna().to_numpy().argmax())
        raise MalformedRow(f"{path}: missing {column} in data row {row}")
    try:
        # np.asarray parses correctly rounded; pd.to_numeric does not
        values = col.to_numpy(dtype=float)
    except (ValueError, TypeError):
        for row, text in enumerate(col):
            try:
                float(text)
            except (ValueError, TypeError):
                raise MalformedRow(f"{path}: non-numeric {column} in data row {row}") from None
        raise
    if not np.all(np.isfinite(values)):
        row = int(np.argmax(~np.isfinite(values)))
        raise MalformedRow(f"{path}: non-finite {column} in data row {row}")
    return values


def load_grid(path) -> SpatialGrid:
    """Read a grid file: header ``cell_id,x,y`` (planar meters) or
    ``cell_id,lon,lat`` (WGS84 degrees), comma-delimited, UTF-8."""
    frame = _read_table(path)
    header = tuple(frame.columns)
    if header == _PLANAR_HEADER:
        system = CoordinateSystem.planar_meters
    elif header == _WGS84_HEADER:
        system = CoordinateSystem.wgs84_degrees
    else:
        raise MalformedRow(
            f"{path}: header must be cell_id,x,y or cell_id,lon,lat, got {','.join(header)}"
        )
    if frame["cell_id"].isna().any():
        raise MalformedRow(f"{path}: missing cell_id")
    xs = _numeric(frame, header[1], path)
    ys = _numeric(frame, header[2], path)
    ids = [str(c).strip() for c in frame["cell_id"]]
    return SpatialGrid(ids, np.column_stack([xs, ys]), system)


def pairwise_distances(grid: SpatialGrid) -> DistanceMatrix:
    """Centroid distance matrix in km: Euclidean (planar) or haversine (WGS84).

    Coincident centroids are rejected rather than perturbed; a zero
    off-diagonal distance always signals a data error.
    """
    if grid.coordinate_system is CoordinateSystem.planar_meters:
        delta = grid.centroids[:, None, :] - grid.centroids[None, :, :]
        d = np.sqrt((delta ** 2).sum(axis=2)) / 1000.0
    else:
        lon = np.radians(grid.centroids[:, 0])
        lat = np.radians(grid.centroids[:, 1])
        dlat = lat[:, None] - lat[None, :]
        dlon = lon[:, None] - lon[None, :]
        a = np.sin(dlat / 2) ** 2 + np.cos(lat)[:, None] * np.cos(lat)[None, :] * np.sin(dlon / 2) ** 2
        d = 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))
    d = (d + d.T) / 2.0  # enforce exact symmetry against FP accumulation
    np.fill_diagonal(d, 0.0)
    if np.any(d[~np.eye(grid.n, dtype=bool)] <= 0.0):
        i, j = np.argwhere((d <= 0.0) & ~np.eye(grid.n, dtype=bool))[0]
        raise DegenerateCentroids(
            f"cells {grid.cell_ids[i]!r} and {grid.cell_ids[j]!r} have coincident centroids"
        )
    return DistanceMatrix(d)


def _validated_od_frame(path, grid: SpatialGrid):
    frame = _read_table(path, _OD_HEADER)
    if len(frame) == 0:
        raise EmptySelection(f"{path}: no data rows")
    for col in ("origin_id", "dest_id", "scenario"):
        if frame[col].isna().any():
            row = int(frame[col].isna().to_numpy().argmax())
            raise MalformedRow(f"{path}: missing {col} in data row {row}")
    hours = _numeric(frame, "hour", path)
    if np.any(hours != np.floor(hours)) or np.any(hours < 0) or np.any(hours > 23):
        row = int(np.argmax((hours != np.floor(hours)) | (hours < 0) | (hours > 23)))
        raise MalformedRow(f"{path}: hour must be an integer in 0..23 (data row {row})")
    counts = _numeric(frame, "count", path)
    if np.any(counts < 0):
        row = int(np.argmax(counts < 0))
        raise NegativeCount(f"{path}: negative count in data row {row}")
    origins = np.array([grid.index(str(c).strip()) for c in frame["origin_id"]])
    dests = np.array([grid.index(str(c).strip()) for c in frame["dest_id"]])
    scenarios = frame["scenario"].str.strip().to_numpy()
    return origins, dests, hours.astype(int), scenarios, counts


def load_od(path, grid: SpatialGrid, label: SliceLabel) -> ODSnapshot:
    """Read the OD rows matching ``label`` into a dense N x N matrix.

    Duplicate (origin, dest) rows for the same label are aggregated by
    summation; absent pairs are 0. The whole file is validated, not just
    the matching rows.
    """
    label = SliceLabel(str(label[0]), int(label[1]))
    origins, dests, hours, scenarios, counts = _validated_od_frame(path, grid)
    mask = (scenarios == label.scenario) & (hours == label.hour)
    if not mask.any():
        raise EmptySelection(f"no rows match scenario={label.scenario!r} hour={label.hour}")
    M = np.zeros((grid.n, grid.n))
    np.add.at(M, (origins[mask], dests[mask]), counts[mask])
    return ODSnapshot(grid, label, M)


def load_od_all(
    path,
    grid: SpatialGrid,
    scenarios: Sequence[str] | None = None,
    hours: Sequence[int] | None = None,
) -> dict[SliceLabel, ODSnapshot]:
    """Read every (scenario, hour) slice of an OD file in a single pass.

    Optional filters restrict the selection; requesting a (scenario, hour)
    combination with no rows raises EmptySelection, matching load_od.
    Returned dict is ordered by (scenario, hour).
    """
    origins, dests, hour_col, scen_col, counts = _validated_od_frame(path, grid)
    want_scen = None if scenarios is None else {str(s) for s in scenarios}
    want_hour = None if hours is None else {int(h) for h in hours}
    present = {}
    for k in range(len(counts)):
        lab = SliceLabel(scen_col[k], int(hour_col[k]))
        if want_scen is not None and lab.scenario not in want_scen:
            continue
        if want_hour is not None and lab.hour not in want_hour:
            continue
        present.setdefault(lab, []).append(k)
    if want_scen is not None or want_hour is not None:
        scen_all = sorted(want_scen) if want_scen is not None else sorted({l.scenario for l in present})
        hour_all = sorted(want_hour) if want_hour is not None else sorted({l.hour for l in present})
        for s in scen_all:
            for h in hour_all:
                if SliceLabel(s, h) not in present:
                    raise EmptySelection(f"no rows match scenario={s!r} hour={h}")
    if not present:
        raise EmptySelection(f"{path}: no rows match the requested selection")
    out = {}
    for lab in sorted(present):
        rows = np.array(present[lab])
        M = np.zeros((grid.n, grid.n))
        np.add.at(M, (origins[rows], dests[rows]), counts[rows])
        out[lab] = ODSnapshot(grid, lab, M)
    return out


def _check_same_grid(snapshots: Iterable[ODSnapshot]) -> SpatialGrid:
    snapshots = list(snapshots)
    if not snapshots:
        raise EmptySelection("need at least one snapshot")
    grid = snapshots[0].grid
    for snap in snapshots[1:]:
        if snap.grid is not grid and snap.grid != grid:
            raise MixedGrids("snapshots reference different grids")
    return grid


def _profile_from_mask(nonzero: np.ndarray, d: DistanceMatrix, bin_width_km: float) -> list[ProfileBin]:
    n = d.n
    iu, ju = np.triu_indices(n, k=1)
    dist = d.d[iu, ju]
    nz = nonzero[iu, ju]
    n_bins = max(1, int(math.ceil(dist.max() / bin_width_km)))
    idx = np.minimum((dist / bin_width_km).astype(int), n_bins - 1)
    totals = np.bincount(idx, minlength=n_bins)
    hits = np.bincount(idx[nz], minlength=n_bins)
    out = []
    for b in range(n_bins):
        pct = 100.0 * hits[b] / totals[b] if totals[b] else 0.0
        out.append(ProfileBin(b * bin_width_km, (b + 1) * bin_width_km, int(totals[b]), int(hits[b]), pct))
    return out


def nonzero_pair_profile(
    snapshots: Sequence[ODSnapshot],
    d: DistanceMatrix,
    bin_width_km: float = 2.0,
    per_snapshot: bool = False,
):
    """Share of unordered cell pairs with any observed flow, by distance bin.

    A pair {i, j} counts as non-zero when M[i][j] > 0 or M[j][i] > 0 in any
    snapshot (snapshots pooled with logical OR). With ``per_snapshot=True``
    returns ``{label: profile}`` computed per slice instead of pooling.
    """
    if bin_width_km <= 0:
        raise DimensionMismatch(f"bin_width_km must be positive, got {bin_width_km}")
    grid = _check_same_grid(snapshots)
    if d.n != grid.n:
        raise DimensionMismatch(f"distance matrix n={d.n} != grid n={grid.n}")
    if per_snapshot:
        return {
            snap.label: _profile_from_mask((snap.M > 0) | (snap.M.T > 0), d, bin_width_km)
            for snap in snapshots
        }
    pooled = np.zeros((grid.n, grid.n), dtype=bool)
    for snap in snapshots:
        pooled |= (snap.M > 0) | (snap.M.T > 0)
    return _profile_from_mask(pooled, d, bin_width_km)
