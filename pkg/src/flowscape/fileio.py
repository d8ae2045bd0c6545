"""Readers and writers for the pipeline's on-disk formats.

All delimited files are UTF-8, comma-separated, with a header row. Floats
are written with 17 significant digits so every value round-trips exactly;
JSON files are written with sorted keys. Both choices make repeated runs
byte-identical.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import MalformedRow, MissingArtifacts
from .grid import CoordinateSystem, ODSnapshot, ProfileBin, SliceLabel, SpatialGrid


def fmt(x: float) -> str:
    """17-significant-digit, round-trippable float formatting."""
    return format(float(x), ".17g")


def potential_filename(label: SliceLabel) -> str:
    return f"potential_{label.scenario}_{label.hour:02d}.csv"


def parse_potential_filename(name: str) -> SliceLabel:
    stem = Path(name).name
    if not (stem.startswith("potential_") and stem.endswith(".csv")):
        raise MalformedRow(f"not a potential file name: {name}")
    body = stem[len("potential_"):-len(".csv")]
    scenario, _, hh = body.rpartition("_")
    if not scenario or not hh.isdigit():
        raise MalformedRow(f"cannot parse (scenario, hour) from {name}")
    return SliceLabel(scenario, int(hh))


# -- grid / OD / ground truth -------------------------------------------------

def write_grid_csv(path, grid: SpatialGrid):
    header = "cell_id,x,y" if grid.coordinate_system is CoordinateSystem.planar_meters else "cell_id,lon,lat"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(header + "\n")
        for cid, (a, b) in zip(grid.cell_ids, grid.centroids):
            fh.write(f"{cid},{fmt(a)},{fmt(b)}\n")


def write_od_csv(path, snapshots: Iterable[ODSnapshot]):
    """Write every positive entry of every snapshot, one pass per slice."""
    frames = []
    for snap in snapshots:
        i, j = np.nonzero(snap.M)
        ids = np.array(snap.grid.cell_ids)
        frames.append(
            pd.DataFrame(
                {
                    "origin_id": ids[i],
                    "dest_id": ids[j],
                    "hour": snap.label.hour,
                    "scenario": snap.label.scenario,
                    "count": snap.M[i, j],
                }
            )
        )
    table = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(
        columns=["origin_id", "dest_id", "hour", "scenario", "count"]
    )
    table.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def write_ground_truth_csv(path, grid: SpatialGrid, ground_truth: dict[SliceLabel, np.ndarray]):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("cell_id,hour,scenario,s_star\n")
        for label in sorted(ground_truth):
            values = ground_truth[label]
            for cid, v in zip(grid.cell_ids, values):
                fh.write(f"{cid},{label.hour},{label.scenario},{fmt(v)}\n")


def read_ground_truth_csv(path) -> dict[SliceLabel, dict[str, float]]:
    out: dict[SliceLabel, dict[str, float]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            label = SliceLabel(row["scenario"], int(row["hour"]))
            out.setdefault(label, {})[row["cell_id"]] = float(row["s_star"])
    return out


# -- potentials ---------------------------------------------------------------

def write_potential_csv(path, cell_ids: Sequence[str], s: np.ndarray):
    """Columns cell_id,s,neg_s; neg_s mirrors the display convention of
    plotting the negated landscape without touching the math core."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("cell_id,s,neg_s\n")
        for cid, v in zip(cell_ids, s):
            fh.write(f"{cid},{fmt(v)},{fmt(-v)}\n")


def read_potential_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["cell_id", "s"]:
            raise MalformedRow(f"{path}: expected header cell_id,s[,neg_s]")
        ids, values = [], []
        for row in reader:
            if len(row) < 2:
                raise MalformedRow(f"{path}: short row {row!r}")
            ids.append(row[0])
            values.append(float(row[1]))
    return ids, np.array(values)


def write_point_geojson(path, grid: SpatialGrid, properties_per_cell: list[dict]):
    """FeatureCollection of cell centroids; planar grids keep their meter
    coordinates (no CRS transform is attempted)."""
    features = []
    for cid, (a, b), props in zip(grid.cell_ids, grid.centroids, properties_per_cell):
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [float(a), float(b)]},
                "properties": {"cell_id": cid, **props},
            }
        )
    write_json(path, {"type": "FeatureCollection", "features": features})


# -- PCA outputs ---------------------------------------------------------------

def write_eigvecs_csv(path, cell_ids: Sequence[str], W: np.ndarray):
    l = W.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("cell_id," + ",".join(f"w{k + 1}" for k in range(l)) + "\n")
        for cid, row in zip(cell_ids, W):
            fh.write(cid + "," + ",".join(fmt(v) for v in row) + "\n")


def read_eigvecs_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0] != "cell_id":
            raise MalformedRow(f"{path}: expected eigvecs header")
        ids, rows = [], []
        for row in reader:
            ids.append(row[0])
            rows.append([float(v) for v in row[1:]])
    return ids, np.array(rows)


def write_scores_csv(path, labels: Sequence[SliceLabel], scores: np.ndarray):
    l = scores.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("scenario,hour," + ",".join(f"PC{k + 1}" for k in range(l)) + "\n")
        for label, row in zip(labels, scores):
            fh.write(f"{label.scenario},{label.hour}," + ",".join(fmt(v) for v in row) + "\n")


def read_scores_csv(path) -> tuple[list[SliceLabel], np.ndarray]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["scenario", "hour"]:
            raise MalformedRow(f"{path}: expected scores header scenario,hour,PC1,...")
        labels, rows = [], []
        for row in reader:
            labels.append(SliceLabel(row[0], int(row[1])))
            rows.append([float(v) for v in row[2:]])
    return labels, np.array(rows)


def write_scree_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("k,eigenvalue,ratio,cumulative\n")
        for r in rows:
            fh.write(f"{r.k},{fmt(r.eigenvalue)},{fmt(r.ratio)},{fmt(r.cumulative)}\n")


def read_scree_csv(path) -> list[tuple[int, float, float, float]]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["k", "eigenvalue", "ratio", "cumulative"]:
            raise MalformedRow(f"{path}: expected scree header")
        return [(int(r[0]), float(r[1]), float(r[2]), float(r[3])) for r in reader]


# -- profile / JSON ------------------------------------------------------------

def write_profile_csv(path, bins: Sequence[ProfileBin]):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("bin_lo_km,bin_hi_km,n_pairs,n_nonzero,pct\n")
        for b in bins:
            fh.write(f"{fmt(b.lo_km)},{fmt(b.hi_km)},{b.n_pairs},{b.n_nonzero},{fmt(b.pct)}\n")


def read_profile_csv(path) -> list[ProfileBin]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["bin_lo_km", "bin_hi_km", "n_pairs", "n_nonzero", "pct"]:
            raise MalformedRow(f"{path}: expected profile header")
        return [ProfileBin(float(r[0]), float(r[1]), int(r[2]), int(r[3]), float(r[4])) for r in reader]


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def require_artifacts(directory, names: Iterable[str]):
    missing = [n for n in names if not (Path(directory) / n).exists()]
    if missing:
        raise MissingArtifacts(f"missing in {directory}: {', '.join(sorted(missing))}")
