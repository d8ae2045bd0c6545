"""Pipeline stages: synth -> potential -> pca -> report.

Each stage reads its inputs from files and writes its outputs to files, so
running stages one by one is byte-identical to the one-shot pipeline, which
simply calls the stages in order. Per-slice potential solves run in a
thread pool against one immutable edge system per threshold group; every
solve is a pure function, so results do not depend on the degree of
parallelism.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
import numpy as np

from . import fileio
from .errors import ConfigError, MalformedRow, MissingArtifacts, MixedGrids
from .grid import (
    SliceLabel,
    load_grid,
    load_od_all,
    nonzero_pair_profile,
    pairwise_distances,
)
from .hodge import SolverConfig, build_edge_system, net_flow, solve_potential
from .pca import ObservationMatrix, fit, scree
from .synth import DEFAULT_SCENARIOS, SynthSpec, default_factors, generate
from .weighting import WeightingMode, binary_weights, fit_threshold, threshold_report

TRACE_CHECK_RTOL = 1e-8


@dataclass
class PipelineConfig:
    grid_path: str | None = None
    od_path: str | None = None
    output_dir: str = "out"
    percentile: float = 0.99
    weighting_mode: WeightingMode = WeightingMode.include_below_theta
    threshold_scope: str = "per_scenario"  # or "pooled"
    solver: SolverConfig = field(default_factory=SolverConfig)
    pca_components: int = 3
    pca_scope: str = "pooled"  # or "per_scenario"
    emit_geojson: bool = False
    scenarios: tuple[str, ...] | None = None
    hours: tuple[int, ...] | None = None
    jobs: int | None = None
    profile_bin_km: float = 2.0
    # synth stage
    seed: int = 0
    synth_rows: int = 20
    synth_cols: int = 20
    synth_hours: int = 24
    synth_scenarios: tuple[str, ...] = DEFAULT_SCENARIOS
    base_volume: float = 100.0
    noise_sd: float = 0.0
    edge_radius_km: float = 6.0

    def __post_init__(self):
        if not 0.0 < self.percentile <= 1.0:
            raise ConfigError(f"percentile must be in (0, 1], got {self.percentile}")
        if self.pca_components < 1:
            raise ConfigError(f"pca_components must be >= 1, got {self.pca_components}")
        if self.threshold_scope not in ("per_scenario", "pooled"):
            raise ConfigError(f"threshold_scope must be per_scenario or pooled, got {self.threshold_scope!r}")
        if self.pca_scope not in ("pooled", "per_scenario"):
            raise ConfigError(f"pca_scope must be pooled or per_scenario, got {self.pca_scope!r}")
        if self.profile_bin_km <= 0:
            raise ConfigError(f"profile_bin_km must be positive, got {self.profile_bin_km}")
        if self.jobs is not None and self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        if not str(self.output_dir):
            raise ConfigError("output_dir must be non-empty")

    def out(self) -> Path:
        path = Path(self.output_dir)
        path.mkdir(parents=True, exist_ok=True)
        return path


def _check_scenario_name(name: str):
    if not name or any(sep in name for sep in ("/", "\\", "\0")) or name in (".", ".."):
        raise MalformedRow(f"scenario name {name!r} is not filesystem-safe")


def _spec_digest(spec: SynthSpec) -> str:
    payload = dataclasses.asdict(spec)
    payload["factors"] = [
        {"name": f.name, "pattern": [fileio.fmt(v) for v in f.pattern], "profile": [fileio.fmt(v) for v in f.profile]}
        for f in spec.factors
    ]
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def run_synth(config: PipelineConfig) -> dict:
    """Generate a planted dataset and write grid/OD/ground-truth files plus
    a manifest carrying the seed and a hash of the generator settings."""
    spec = SynthSpec(
        grid_shape=(config.synth_rows, config.synth_cols),
        n_hours=config.synth_hours,
        scenarios=tuple(config.synth_scenarios),
        factors=default_factors((config.synth_rows, config.synth_cols), config.synth_hours),
        base_volume=config.base_volume,
        noise_sd=config.noise_sd,
        rng_seed=config.seed,
        edge_radius_km=config.edge_radius_km,
    )
    for name in spec.scenarios:
        _check_scenario_name(name)
    result = generate(spec)
    out = config.out()
    fileio.write_grid_csv(out / "grid.csv", result.grid)
    fileio.write_od_csv(out / "od.csv", result.snapshots)
    fileio.write_ground_truth_csv(out / "ground_truth.csv", result.grid, result.ground_truth)
    manifest = {
        "seed": config.seed,
        "spec_hash": _spec_digest(spec),
        "grid_shape": [config.synth_rows, config.synth_cols],
        "n_hours": config.synth_hours,
        "scenarios": list(spec.scenarios),
        "base_volume": config.base_volume,
        "noise_sd": config.noise_sd,
        "edge_radius_km": config.edge_radius_km,
        "clip_fraction": result.clip_fraction,
        "files": ["grid.csv", "od.csv", "ground_truth.csv"],
    }
    fileio.write_json(out / "manifest.json", manifest)
    return {"stage": "synth", "n_slices": len(result.snapshots), "spec_hash": manifest["spec_hash"]}


def run_potential(config: PipelineConfig) -> dict:
    """Fit thresholds, build edge systems, and solve one potential per
    (scenario, hour) slice; writes potentials, thresholds.json,
    solver_diagnostics.json, and profile.csv."""
    if not config.grid_path or not config.od_path:
        raise ConfigError("potential stage needs grid_path and od_path")
    grid = load_grid(config.grid_path)
    snapshots = load_od_all(config.od_path, grid, config.scenarios, config.hours)
    for label in snapshots:
        _check_scenario_name(label.scenario)
    d = pairwise_distances(grid)

    if config.threshold_scope == "per_scenario":
        groups = {}
        for label in snapshots:
            groups.setdefault(label.scenario, []).append(label)
        groups = {k: groups[k] for k in sorted(groups)}
    else:
        groups = {None: sorted(snapshots)}

    rules, systems, slice_system = {}, {}, {}
    for tag, labels in groups.items():
        rule = fit_threshold(
            [snapshots[l] for l in labels],
            d,
            percentile=config.percentile,
            weighting=config.weighting_mode,
            scenario=tag,
        )
        rules[tag] = rule
        systems[tag] = build_edge_system(d, binary_weights(rule), grid)
        for label in labels:
            slice_system[label] = tag

    jobs = config.jobs or os.cpu_count() or 1
    ordered = sorted(snapshots)

    def solve_one(label: SliceLabel):
        system = systems[slice_system[label]]
        return solve_potential(net_flow(snapshots[label]), system, config.solver)

    if jobs == 1:
        fields = {label: solve_one(label) for label in ordered}
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {label: pool.submit(solve_one, label) for label in ordered}
            fields = {label: futures[label].result() for label in ordered}

    out = config.out()
    diagnostics = []
    for label in ordered:
        f = fields[label]
        fileio.write_potential_csv(out / fileio.potential_filename(label), grid.cell_ids, f.s)
        if config.emit_geojson:
            fileio.write_point_geojson(
                out / (fileio.potential_filename(label)[: -len(".csv")] + ".geojson"),
                grid,
                [{"potential": float(v)} for v in f.s],
            )
        diagnostics.append(
            {
                "scenario": label.scenario,
                "hour": label.hour,
                "method": f.method.value,
                "iterations": f.iterations,
                "residual_norm": f.residual_norm,
                "components": f.n_components,
            }
        )
    fileio.write_json(out / "thresholds.json", [threshold_report(rules[t]) for t in groups])
    fileio.write_json(out / "solver_diagnostics.json", diagnostics)
    fileio.write_profile_csv(
        out / "profile.csv",
        nonzero_pair_profile(list(snapshots.values()), d, config.profile_bin_km),
    )
    return {
        "stage": "potential",
        "n_slices": len(ordered),
        "thresholds": {t if t is not None else "pooled": rules[t].theta_km for t in groups},
    }


def _load_potential_groups(config: PipelineConfig):
    """Read potential files back and group them per the PCA scope.

    Returns {suffix: (labels, cell_ids, row-matrix)} with suffix "" for the
    pooled model and "_<scenario>" otherwise.
    """
    out = config.out()
    files = sorted(out.glob("potential_*.csv"))
    if not files:
        raise MissingArtifacts(f"no potential_*.csv files in {out}")
    labels, rows, cell_ids = [], [], None
    for path in files:
        label = fileio.parse_potential_filename(path.name)
        ids, values = fileio.read_potential_csv(path)
        if cell_ids is None:
            cell_ids = ids
        elif ids != cell_ids:
            raise MixedGrids(f"{path.name} lists different cells than earlier potential files")
        labels.append(label)
        rows.append(values)
    order = sorted(range(len(labels)), key=lambda k: labels[k])
    labels = [labels[k] for k in order]
    X = np.vstack([rows[k] for k in order])
    if config.pca_scope == "pooled":
        return {"": (labels, cell_ids, X)}
    groups = {}
    for k, label in enumerate(labels):
        groups.setdefault(f"_{label.scenario}", ([], cell_ids, []))
        groups[f"_{label.scenario}"][0].append(label)
        groups[f"_{label.scenario}"][2].append(X[k])
    return {
        suffix: (labs, ids, np.vstack(mat)) for suffix, (labs, ids, mat) in sorted(groups.items())
    }


def _grid_for_geojson(config: PipelineConfig, cell_ids):
    """GeoJSON needs centroids; take the configured grid file or fall back
    to the grid.csv a synth run leaves in the output directory."""
    path = config.grid_path or (config.out() / "grid.csv")
    if not Path(path).exists():
        raise MissingArtifacts(f"eigenvector GeoJSON needs a grid file; none at {path}")
    grid = load_grid(path)
    if list(grid.cell_ids) != list(cell_ids):
        raise MixedGrids(f"grid file {path} does not list the potentials' cells in order")
    return grid


def run_pca(config: PipelineConfig) -> dict:
    """Fit PCA over the exported potentials and write eigvecs/scores/scree."""
    out = config.out()
    summary = {"stage": "pca", "groups": {}}
    for suffix, (labels, cell_ids, X_raw) in _load_potential_groups(config).items():
        obs = ObservationMatrix.from_rows(X_raw, labels)
        model = fit(obs)
        l = min(config.pca_components, model.n_components)
        fileio.write_eigvecs_csv(out / f"eigvecs{suffix}.csv", cell_ids, model.eigenvectors[:, :l])
        fileio.write_scores_csv(out / f"scores{suffix}.csv", labels, model.scores[:, :l])
        rows = scree(model)
        fileio.write_scree_csv(out / f"scree{suffix}.csv", rows)
        if config.emit_geojson:
            grid = _grid_for_geojson(config, cell_ids)
            props = [
                {f"w{k + 1}": float(model.eigenvectors[c, k]) for k in range(l)}
                for c in range(model.p)
            ]
            fileio.write_point_geojson(out / f"eigvecs{suffix}.geojson", grid, props)
        summary["groups"][suffix or "pooled"] = {
            "n_observations": obs.n,
            "n_cells": obs.p,
            "components_exported": l,
            "cumulative_ratio": [r.cumulative for r in rows[: config.pca_components]],
        }
    return summary


def run_report(config: PipelineConfig) -> dict:
    """Consolidate thresholds, profile, scree, and score trajectories into
    report.json plus plot-ready trajectories*.csv; recheck the trace
    identity sum(eigenvalues) = ||X||_F^2 / (n - 1) from the exported files."""
    out = config.out()
    fileio.require_artifacts(out, ["thresholds.json", "profile.csv"])
    scree_files = sorted(out.glob("scree*.csv"))
    if not scree_files:
        raise MissingArtifacts(f"no scree*.csv in {out}")
    groups = {}
    for scree_path in scree_files:
        suffix = scree_path.name[len("scree"):-len(".csv")]
        fileio.require_artifacts(out, [f"scores{suffix}.csv", f"eigvecs{suffix}.csv"])
        scree_rows = fileio.read_scree_csv(scree_path)
        labels, score_matrix = fileio.read_scores_csv(out / f"scores{suffix}.csv")

        wanted = None if suffix == "" else suffix[1:]
        pot_files = [
            p for p in sorted(out.glob("potential_*.csv"))
            if wanted is None or fileio.parse_potential_filename(p.name).scenario == wanted
        ]
        if len(pot_files) < 2:
            raise MissingArtifacts(
                f"report group {suffix or 'pooled'} needs at least 2 potential slices"
            )
        rows = np.vstack([fileio.read_potential_csv(p)[1] for p in pot_files])
        centered = rows - rows.mean(axis=0)
        fro = float((centered ** 2).sum()) / (rows.shape[0] - 1)
        lam_sum = float(sum(r[1] for r in scree_rows))
        scale = max(abs(fro), abs(lam_sum), 1e-300)
        rel_err = abs(fro - lam_sum) / scale
        trace_check = {
            "sum_eigenvalues": lam_sum,
            "frobenius_sq_over_nm1": fro,
            "rel_error": rel_err,
            "ok": bool(rel_err <= TRACE_CHECK_RTOL),
        }

        traj_path = out / f"trajectories{suffix}.csv"
        with open(traj_path, "w", encoding="utf-8", newline="") as fh:
            fh.write("pc,scenario,hour,score\n")
            for k in range(score_matrix.shape[1]):
                for label, row in zip(labels, score_matrix):
                    fh.write(f"PC{k + 1},{label.scenario},{label.hour},{fileio.fmt(row[k])}\n")

        groups[suffix or "pooled"] = {
            "n_observations": len(labels),
            "scree": [
                {"k": k, "eigenvalue": ev, "ratio": ra, "cumulative": cu}
                for k, ev, ra, cu in scree_rows
            ],
            "cumulative_top": {
                str(k): scree_rows[k - 1][3] for k in (1, 2, 3) if k <= len(scree_rows)
            },
            "trace_check": trace_check,
            "trajectories_file": traj_path.name,
        }
    profile = fileio.read_profile_csv(out / "profile.csv")
    report = {
        "thresholds": fileio.read_json(out / "thresholds.json"),
        "profile": {
            "n_bins": len(profile),
            "bin_km": profile[0].hi_km - profile[0].lo_km if profile else None,
            "pct_by_bin": [b.pct for b in profile],
        },
        "groups": groups,
    }
    fileio.write_json(out / "report.json", report)
    return {"stage": "report", "groups": list(groups), "trace_ok": all(g["trace_check"]["ok"] for g in groups.values())}


def run_pipeline(config: PipelineConfig) -> dict:
    """potential -> pca -> report, staged through the same files."""
    pot = run_potential(config)
    pca_summary = run_pca(config)
    rep = run_report(config)
    return {"stage": "pipeline", "potential": pot, "pca": pca_summary, "report": rep}
