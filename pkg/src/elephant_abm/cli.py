"""Command-line entry point: ``elephant-abm simulate | calibrate | analyze``.

Exit codes: 0 success, 2 configuration error, 3 input/output error,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import warnings
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import BUILD_ID
from .config import ConfigError, ga_config, load_config, to_run_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


class InputError(OSError):
    """Missing or unreadable input."""


def build_id() -> str:
    """Identifier printed by ``--version`` and stored in ``summary.json``."""
    return BUILD_ID


# ------------------------------------------------------------------ helpers


def _csv_float(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _csv_str(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _emit(payload: dict, out: Optional[str]) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    sys.stdout.write(text)


def _require(path: Optional[str], what: str) -> Path:
    if path is None:
        raise InputError(f"{what} is required")
    p = Path(path)
    if not p.exists():
        raise InputError(f"{what} not found: {path}")
    return p


def _read_xy(path: str) -> np.ndarray:
    """Read the ``x`` and ``y`` columns of a CSV file."""
    p = _require(path, "input file")
    with open(p, newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"x", "y"} <= set(reader.fieldnames):
            raise InputError(f"{path}: needs x and y columns")
        try:
            rows = [(float(r["x"]), float(r["y"])) for r in reader]
        except (TypeError, ValueError) as exc:
            raise InputError(f"{path}: {exc}") from None
    return np.array(rows, dtype=float).reshape(-1, 2)


def _run_trajectories(runs: str) -> list[tuple[str, np.ndarray]]:
    d = _require(runs, "run directory") / "trajectories"
    files = sorted(d.glob("replicate_*.csv"))
    if not files:
        raise InputError(f"no trajectories under {d}")
    return [(f.name, _read_xy(str(f))) for f in files]


def _threads(value: Optional[int]) -> int:
    return value if value is not None else (os.cpu_count() or 1)


# ---------------------------------------------------------------- simulate


def cmd_simulate(args) -> int:
    from .engine import run_batch, write_batch

    doc = load_config(args.config, args.set or [])
    config = to_run_config(doc)
    batch = run_batch(config, threads=_threads(args.threads))
    out = write_batch(batch, args.out, doc)
    sys.stdout.write(f"{len(batch.replicates)} replicates written to {out}\n")
    return EXIT_OK


# --------------------------------------------------------------- calibrate


def cmd_calibrate_hmm(args) -> int:
    from .calibration import extract_steps, fit_families, read_track_csv

    doc = load_config(args.config, args.set or [])
    hcfg = doc["calibration"]["hmm"]
    path = _require(args.track, "--track")
    try:
        track = read_track_csv(path)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    series = extract_steps(track)
    comp = fit_families(series,
                        step_families=args.step_families or hcfg["step_families"],
                        turn_families=args.turn_families or hcfg["turn_families"],
                        n_starts=args.starts or hcfg["n_starts"], max_iter=hcfg["max_iter"],
                        tol=hcfg["tol"], rng=hcfg["seed"] if args.seed is None else args.seed)
    report = comp.report()
    report["n_steps"] = len(series)
    report["segments"] = int(series.starts.sum())
    best = comp.best
    report["transition"] = best.to_dict()["transition"]
    _emit(report, args.out)
    return EXIT_OK


def _biobjective(x):
    return (float(x[0] ** 2), float((x[0] - 2.0) ** 2))


def _load_targets(spec, track: Optional[str]):
    from .calibration import Estimate, MovementObjectives, movement_objectives, read_track_csv

    if track is not None:
        t = read_track_csv(_require(track, "--track"))
        return movement_objectives([np.column_stack([t.x, t.y])])
    if isinstance(spec, str):
        spec = json.loads(_require(spec, "calibration.ga.targets").read_text())
    if not spec:
        raise ConfigError("calibration.ga.targets", "targets are required for the simulation problem")
    try:
        return MovementObjectives(**{k: Estimate(float(v["value"]), float(v["low"]), float(v["high"]))
                                     for k, v in spec.items()})
    except (KeyError, TypeError) as exc:
        raise ConfigError("calibration.ga.targets", f"expected mcp_km2/diel_km/net_km with value/low/high ({exc})") from None


def cmd_calibrate_ga(args) -> int:
    from .calibration import CALIBRATION_VARIABLES, nsga2, simulation_objective

    doc = load_config(args.config, args.set or [])
    gcfg = ga_config(doc, generations=args.generations, pop_size=args.pop, seed=args.seed)
    if args.problem == "biobjective":
        front = nsga2(_biobjective, [(-5.0, 5.0)], gcfg, names=("x",), objective_names=("f1", "f2"))
    else:
        config = to_run_config(doc)
        targets = _load_targets(doc["calibration"]["ga"]["targets"], args.track)
        bounds_doc = doc["calibration"]["ga"]["bounds"]
        names = [v[0] for v in CALIBRATION_VARIABLES]
        unknown = set(bounds_doc) - set(names)
        if unknown:
            raise ConfigError("calibration.ga.bounds", f"unknown variables {sorted(unknown)}")
        bounds = [tuple(bounds_doc[n]) for n in names]
        evaluate = simulation_objective(config, targets, threads=_threads(args.threads))
        front = nsga2(evaluate, bounds, gcfg, names=tuple(names),
                      objective_names=("mcp_penalty", "diel_penalty", "net_penalty"))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    front.to_csv(out)
    sys.stdout.write(f"{len(front)} nondominated solutions written to {out}\n")
    return EXIT_OK


def cmd_calibrate_slope(args) -> int:
    from .calibration import tune_slope_tolerance

    doc = load_config(args.config, args.set or [])
    scfg = doc["calibration"]["slope"]
    config = to_run_config(doc)
    tols = args.tolerances or scfg["tolerances"]
    result = tune_slope_tolerance(config, tols, bound=scfg["bound"], threads=_threads(args.threads),
                                  choose=scfg["choose"])
    _emit({"selected_tolerance": result.tolerance, "bound": result.bound, "sweep": result.rows()}, args.out)
    return EXIT_OK


# ----------------------------------------------------------------- analyze


def cmd_analyze(args) -> int:
    from . import analytics as an

    doc = load_config(args.config, args.set or [])
    acfg = doc["analysis"]
    tpd = acfg["ticks_per_day"]
    kind = args.analysis
    if kind == "mcp":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            payload = {"area_km2": an.mcp_area(_read_xy(args.traj))}
    elif kind == "kde":
        pts = _read_xy(args.traj)
        levels = args.levels or acfg["kde_levels"]
        grid = an.kde_grid(pts, cellsize=args.cellsize or acfg["kde_cellsize"])
        areas = an.kde_area(pts, levels, grid=grid)
        payload = {"levels": [{"level": q, "area_km2": a} for q, a in areas.items()],
                   "bandwidth_m": [float(v) for v in an.silverman_bandwidth(pts)]}
        if args.raster:
            from .terrain import write_ascii_grid
            write_ascii_grid(grid, args.raster)
            payload["raster"] = str(args.raster)
    elif kind == "displacement":
        diel, net = an.displacement_stats(_read_xy(args.traj), tpd)
        payload = {"diel_km": diel.tolist(), "net_km": net.tolist(),
                   "mean_diel_km": float(diel.mean()), "mean_net_km": float(net.mean())}
    elif kind == "dbscan":
        return _analyze_dbscan(args, acfg)
    elif kind == "raids":
        summary_path = _require(args.runs, "--runs") / "summary.json"
        summary = json.loads(_require(str(summary_path), "summary.json").read_text())
        keys = ("raid_probability", "reentry_probability", "mean_raid_episodes", "deprived_raid_fraction",
                "starvation_probability", "daily_intake_histogram", "replicates", "month")
        payload = {k: summary.get(k) for k in keys}
        payload["episodes_per_replicate"] = [p["raid_episodes"] for p in summary.get("per_replicate", [])]
    elif kind == "converge":
        payload = _analyze_converge(args, acfg)
    else:  # pragma: no cover - argparse restricts choices
        raise ValueError(kind)
    _emit(payload, args.out)
    return EXIT_OK


def _analyze_dbscan(args, acfg) -> int:
    from .analytics import dbscan

    path = _require(args.points, "--points")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = list(reader.fieldnames or [])
        rows = list(reader)
    if not {"x", "y"} <= set(header):
        raise InputError(f"{path}: needs x and y columns")
    pts = np.array([(float(r["x"]), float(r["y"])) for r in rows]).reshape(-1, 2)
    eps = args.eps if args.eps is not None else acfg["dbscan_eps"]
    min_pts = args.min_pts if args.min_pts is not None else acfg["dbscan_min_pts"]
    result = dbscan(pts, eps, min_pts)
    out = args.out or str(Path(path).with_name(Path(path).stem + "_clusters.csv"))
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header + ["cluster"])
        for r, lab in zip(rows, result.labels):
            w.writerow([r[h] for h in header] + [int(lab)])
    sys.stdout.write(json.dumps({"clusters": result.n_clusters, "noise": int(np.sum(result.labels < 0)),
                                 "output": out}, sort_keys=True) + "\n")
    return EXIT_OK


def _metric_samples(args, tpd: int) -> np.ndarray:
    from . import analytics as an

    metric = args.metric
    if metric in ("raids", "plantation_ticks"):
        summary = json.loads(_require(str(Path(args.runs) / "summary.json"), "summary.json").read_text())
        key = "raid_episodes" if metric == "raids" else "plantation_ticks"
        return np.array([p[key] for p in summary["per_replicate"]], dtype=float)
    values = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for _, xy in _run_trajectories(args.runs):
            if metric == "mcp":
                values.append(an.mcp_area(xy))
            else:
                diel, net = an.displacement_stats(xy, tpd)
                values.append(diel.mean() if metric == "diel" else net.mean())
    return np.array(values)


def _analyze_converge(args, acfg) -> dict:
    from . import analytics as an

    eps = args.eps or acfg["epsilons"]
    if args.metric == "occupancy":
        trajs = [xy for _, xy in _run_trajectories(args.runs)]
        allpts = np.vstack(trajs)
        cs = args.cellsize or acfg["kde_cellsize"]
        lo = allpts.min(axis=0)
        shape = tuple((np.floor((allpts.max(axis=0) - lo) / cs).astype(int) + 1)[::-1])
        grids = []
        for xy in trajs:
            col = np.floor((xy[:, 0] - lo[0]) / cs).astype(int)
            row = shape[0] - 1 - np.floor((xy[:, 1] - lo[1]) / cs).astype(int)
            grids.append(an.occupancy_grid(row, col, shape))
        rep = an.convergence_kl(np.array(grids), eps)
    else:
        rep = an.convergence_cv(_metric_samples(args, acfg["ticks_per_day"]), eps)
    return {
        "metric": args.metric,
        "statistic": rep.metric,
        "flagged": rep.flagged,
        "note": rep.note,
        "nmin": [{"epsilon": e, "nmin": n} for e, n in rep.nmin.items()],
        "curve": [{"replicates": int(s), "value": (float(v) if np.isfinite(v) else None)}
                  for s, v in zip(rep.sizes, rep.curve)],
    }


# ------------------------------------------------------------------ parser


def _add_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON configuration file (defaults used when omitted)")
    p.add_argument("--set", action="append", metavar="PATH=VALUE",
                   help="override a configuration field, e.g. run.replicates=8 (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elephant-abm",
                                     description="Elephant movement and crop-raid simulator with calibration "
                                                 "and analysis tools.")
    parser.add_argument("--version", action="version", version=build_id())
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a batch of replicates")
    _add_config(sim)
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--threads", type=int, help="worker processes (default: all cores)")
    sim.set_defaults(func=cmd_simulate)

    cal = sub.add_parser("calibrate", help="movement calibration tools")
    csub = cal.add_subparsers(dest="calibration", required=True)
    hmm = csub.add_parser("hmm", help="fit two-state HMMs to a relocation track")
    _add_config(hmm)
    hmm.add_argument("--track", required=True, help="CSV with timestamp,x,y")
    hmm.add_argument("--out", help="report JSON path")
    hmm.add_argument("--step-families", type=_csv_str)
    hmm.add_argument("--turn-families", type=_csv_str)
    hmm.add_argument("--starts", type=int)
    hmm.add_argument("--seed", type=int)
    hmm.set_defaults(func=cmd_calibrate_hmm)

    ga = csub.add_parser("ga", help="multi-objective parameter search")
    _add_config(ga)
    ga.add_argument("--problem", choices=("simulation", "biobjective"), default="simulation",
                    help="'biobjective' runs the analytic test problem (x^2, (x-2)^2)")
    ga.add_argument("--track", help="relocation CSV whose movement statistics become the targets")
    ga.add_argument("--generations", type=int)
    ga.add_argument("--pop", type=int)
    ga.add_argument("--seed", type=int)
    ga.add_argument("--threads", type=int)
    ga.add_argument("--out", required=True, help="Pareto front CSV path")
    ga.set_defaults(func=cmd_calibrate_ga)

    sl = csub.add_parser("slope", help="sweep the slope tolerance")
    _add_config(sl)
    sl.add_argument("--tolerances", type=_csv_float)
    sl.add_argument("--threads", type=int)
    sl.add_argument("--out", help="sweep report JSON path")
    sl.set_defaults(func=cmd_calibrate_slope)

    an = sub.add_parser("analyze", help="analyses of trajectories and batch outputs")
    asub = an.add_subparsers(dest="analysis", required=True)
    for name, needs in (("mcp", "traj"), ("kde", "traj"), ("displacement", "traj"),
                        ("dbscan", "points"), ("raids", "runs"), ("converge", "runs")):
        p = asub.add_parser(name)
        _add_config(p)
        p.add_argument(f"--{needs}", required=True)
        p.add_argument("--out")
        p.set_defaults(func=cmd_analyze)
        if name == "kde":
            p.add_argument("--levels", type=_csv_float)
            p.add_argument("--cellsize", type=float)
            p.add_argument("--raster", help="write the density grid as an ESRI ASCII raster")
        if name == "dbscan":
            p.add_argument("--eps", type=float)
            p.add_argument("--min-pts", type=int)
        if name == "converge":
            p.add_argument("--metric", default="mcp",
                           choices=("mcp", "diel", "net", "raids", "plantation_ticks", "occupancy"))
            p.add_argument("--eps", type=_csv_float)
            p.add_argument("--cellsize", type=float)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except (InputError, OSError) as exc:
        sys.stderr.write(f"input error: {exc}\n")
        return EXIT_IO
    except (FloatingPointError, ArithmeticError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC
    except Exception as exc:
        from .calibration import NoFeasibleTolerance
        from .engine import ReplicateError

        if isinstance(exc, (NoFeasibleTolerance, ReplicateError)):
            sys.stderr.write(f"numerical failure: {exc}\n")
            return EXIT_NUMERIC
        if isinstance(exc, ValueError):
            sys.stderr.write(f"input error: {exc}\n")
            return EXIT_IO
        raise


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
