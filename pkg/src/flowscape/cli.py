"""Command-line front door.

Subcommands mirror the pipeline stages: synth, potential, pca, report, and
pipeline (potential + pca + report in one go). Settings come from, in
increasing precedence: built-in defaults, a flat TOML config file
(--config), the FLOWSCAPE_OUTPUT_DIR environment variable (output_dir
only), and command-line flags.

On failure a single JSON error object {"error": code, "message": ...} goes
to stderr and the process exits 2 (input/validation), 3 (solver failure),
or 4 (missing artifacts).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ConfigError, FlowscapeError
from .hodge import SolverConfig, SolverMethod
from .pipeline import (
    PipelineConfig,
    run_pca,
    run_pipeline,
    run_potential,
    run_report,
    run_synth,
)
from .weighting import WeightingMode

_CONFIG_KEYS = {
    "grid_path": str,
    "od_path": str,
    "output_dir": str,
    "percentile": float,
    "weighting_mode": str,
    "threshold_scope": str,
    "solver_method": str,
    "solver_rel_tol": float,
    "solver_max_iter": int,
    "pca_components": int,
    "pca_scope": str,
    "emit_geojson": bool,
    "scenarios": list,
    "hours": list,
    "jobs": int,
    "profile_bin_km": float,
    "seed": int,
    "synth_rows": int,
    "synth_cols": int,
    "synth_hours": int,
    "synth_scenarios": list,
    "base_volume": float,
    "noise_sd": float,
    "edge_radius_km": float,
}


def _load_config_file(path) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path}: {exc}") from None
    for key, value in raw.items():
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(value, dict):
            raise ConfigError(f"config key {key!r}: nested tables are not supported")
    return raw


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="flat TOML config file")
    parser.add_argument("--output-dir", help="output directory (also FLOWSCAPE_OUTPUT_DIR)")


def _add_potential_args(parser: argparse.ArgumentParser):
    parser.add_argument("--grid", help="grid csv (cell_id,x,y or cell_id,lon,lat)")
    parser.add_argument("--od", help="OD csv (origin_id,dest_id,hour,scenario,count)")
    parser.add_argument("--percentile", type=float, help="trip-volume CDF level for theta (default 0.99)")
    parser.add_argument("--weighting-mode", choices=[m.value for m in WeightingMode])
    parser.add_argument("--threshold-scope", choices=["per_scenario", "pooled"])
    parser.add_argument("--solver-method", choices=[m.value for m in SolverMethod])
    parser.add_argument("--rel-tol", type=float, help="CG relative residual tolerance")
    parser.add_argument("--max-iter", type=int, help="CG iteration cap (default 10*N)")
    parser.add_argument("--jobs", type=int, help="parallel slice solves (default: all cores)")
    parser.add_argument("--scenarios", type=_csv_list, help="comma-separated scenario filter")
    parser.add_argument("--hours", type=_csv_list, help="comma-separated hour filter")
    parser.add_argument("--profile-bin-km", type=float, help="distance profile bin width")
    parser.add_argument("--emit-geojson", action="store_true", default=None)


def _add_pca_args(parser: argparse.ArgumentParser):
    parser.add_argument("--pca-components", type=int, help="components to export (default 3)")
    parser.add_argument("--pca-scope", choices=["pooled", "per_scenario"])
    if not any(a.dest == "emit_geojson" for a in parser._actions):
        parser.add_argument("--emit-geojson", action="store_true", default=None)
    if not any(a.dest == "grid" for a in parser._actions):
        parser.add_argument("--grid", help="grid csv (needed only for --emit-geojson)")


def _add_synth_args(parser: argparse.ArgumentParser):
    parser.add_argument("--seed", type=int, help="generator seed")
    parser.add_argument("--rows", type=int, dest="synth_rows")
    parser.add_argument("--cols", type=int, dest="synth_cols")
    parser.add_argument("--synth-hours", type=int)
    parser.add_argument("--synth-scenarios", type=_csv_list, help="comma-separated names")
    parser.add_argument("--base-volume", type=float)
    parser.add_argument("--noise-sd", type=float)
    parser.add_argument("--edge-radius-km", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowscape",
        description="Potential landscapes and principal-component trajectories from OD matrices.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a planted synthetic dataset")
    _add_common(p_synth)
    _add_synth_args(p_synth)

    p_pot = sub.add_parser("potential", help="fit thresholds and solve per-slice potentials")
    _add_common(p_pot)
    _add_potential_args(p_pot)

    p_pca = sub.add_parser("pca", help="PCA over exported potentials")
    _add_common(p_pca)
    _add_pca_args(p_pca)

    p_rep = sub.add_parser("report", help="consolidated report from pipeline outputs")
    _add_common(p_rep)

    p_all = sub.add_parser("pipeline", help="potential + pca + report")
    _add_common(p_all)
    _add_potential_args(p_all)
    _add_pca_args(p_all)
    return parser


def _merge_config(args: argparse.Namespace) -> PipelineConfig:
    values: dict = {}
    if getattr(args, "config", None):
        values.update(_load_config_file(args.config))

    env_out = os.environ.get("FLOWSCAPE_OUTPUT_DIR")
    if env_out:
        values["output_dir"] = env_out

    flag_map = {
        "grid": "grid_path",
        "od": "od_path",
        "output_dir": "output_dir",
        "percentile": "percentile",
        "weighting_mode": "weighting_mode",
        "threshold_scope": "threshold_scope",
        "solver_method": "solver_method",
        "rel_tol": "solver_rel_tol",
        "max_iter": "solver_max_iter",
        "pca_components": "pca_components",
        "pca_scope": "pca_scope",
        "emit_geojson": "emit_geojson",
        "scenarios": "scenarios",
        "hours": "hours",
        "jobs": "jobs",
        "profile_bin_km": "profile_bin_km",
        "seed": "seed",
        "synth_rows": "synth_rows",
        "synth_cols": "synth_cols",
        "synth_hours": "synth_hours",
        "synth_scenarios": "synth_scenarios",
        "base_volume": "base_volume",
        "noise_sd": "noise_sd",
        "edge_radius_km": "edge_radius_km",
    }
    for attr, key in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            values[key] = value

    kwargs: dict = {}
    coerce = {
        "grid_path": str,
        "od_path": str,
        "output_dir": str,
        "percentile": float,
        "pca_components": int,
        "emit_geojson": bool,
        "jobs": int,
        "profile_bin_km": float,
        "seed": int,
        "synth_rows": int,
        "synth_cols": int,
        "synth_hours": int,
        "base_volume": float,
        "noise_sd": float,
        "edge_radius_km": float,
        "threshold_scope": str,
        "pca_scope": str,
    }
    for key, to in coerce.items():
        if key in values:
            try:
                kwargs[key] = to(values[key])
            except (ValueError, TypeError):
                raise ConfigError(f"config key {key!r}: cannot read {values[key]!r}") from None
    if "weighting_mode" in values:
        try:
            kwargs["weighting_mode"] = WeightingMode(values["weighting_mode"])
        except ValueError:
            raise ConfigError(f"unknown weighting_mode {values['weighting_mode']!r}") from None
    solver_kwargs = {}
    if "solver_method" in values:
        try:
            solver_kwargs["method"] = SolverMethod(values["solver_method"])
        except ValueError:
            raise ConfigError(f"unknown solver_method {values['solver_method']!r}") from None
    if "solver_rel_tol" in values:
        solver_kwargs["rel_tol"] = float(values["solver_rel_tol"])
    if "solver_max_iter" in values:
        solver_kwargs["max_iter"] = int(values["solver_max_iter"])
    if solver_kwargs:
        kwargs["solver"] = SolverConfig(**solver_kwargs)
    if "scenarios" in values:
        kwargs["scenarios"] = tuple(str(s) for s in values["scenarios"])
    if "hours" in values:
        try:
            kwargs["hours"] = tuple(int(h) for h in values["hours"])
        except ValueError:
            raise ConfigError(f"hours filter must be integers, got {values['hours']!r}") from None
    if "synth_scenarios" in values:
        kwargs["synth_scenarios"] = tuple(str(s) for s in values["synth_scenarios"])
    return PipelineConfig(**kwargs)


_COMMANDS = {
    "synth": run_synth,
    "potential": run_potential,
    "pca": run_pca,
    "report": run_report,
    "pipeline": run_pipeline,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _merge_config(args)
        summary = _COMMANDS[args.command](config)
    except FlowscapeError as exc:
        json.dump({"error": exc.code, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return exc.exit_status
    json.dump(summary, sys.stdout, sort_keys=True)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
